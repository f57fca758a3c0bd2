"""Training loop: REINFORCE on a neural policy, periodic distillation into
symbolic expressions, and importance-sampled updates driven by those
expressions.

Schedule for episode ``E`` (1-based):

* ``E >= e_tf`` and ``E % e_delta == 0``: fit a symbolic policy to the
  network's action probabilities on that episode's states (after its update);
* ``e_is_start <= E <= e_ts`` and ``E % e_delta == 0`` (once a fit exists):
  roll out the symbolic policy and apply the importance-weighted update;
* otherwise roll out the network and apply the plain Monte Carlo update.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import envs as envs_mod
from . import neuralpolicy as nnp
from . import symreg
from .exprtree import Binary, Constant, Expr, evaluate, parse_expr, substitute, to_string

log = logging.getLogger(__name__)

_MIN_TARGET_SCALE = 1e-6

LOG_HEADER = ("episode", "return", "ma50_return", "update_kind", "sr_fit_mse", "wall_ms")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# data


@dataclass
class Trajectory:
    """One episode.

    ``behavior_logp[t]`` is the log probability (or density) of ``actions[t]``
    under the policy that chose it; ``target_logp[t]`` is the same action
    under the network being trained. ``action_probs`` holds the network's
    full probability vector at each step for discrete actions.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_logp: np.ndarray
    target_logp: np.ndarray
    action_probs: np.ndarray | None
    final_state: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def behavior_probs(self) -> np.ndarray:
        return np.exp(self.behavior_logp)

    @property
    def target_probs(self) -> np.ndarray:
        return np.exp(self.target_logp)

    @property
    def total_return(self) -> float:
        return float(np.sum(self.rewards))


@dataclass
class SymbolicPolicy:
    """Closed-form policy built from expression trees.

    Discrete: ``exprs[i]`` scores action ``i``. Scores that are not finite
    or not positive are replaced by ``floor`` and the result is normalised.
    Gaussian: ``means[j]``/``stds[j]`` give the mean and standard deviation
    of action dimension ``j``; the standard deviation is floored at 0.01.
    """

    exprs: list[Expr] = field(default_factory=list)
    means: list[Expr] = field(default_factory=list)
    stds: list[Expr] = field(default_factory=list)
    floor: float = 0.05

    @property
    def discrete(self) -> bool:
        return bool(self.exprs)

    @property
    def n_actions(self) -> int:
        return len(self.exprs) if self.discrete else len(self.means)

    @classmethod
    def complement(cls, exprs: list[Expr], floor: float = 0.05) -> SymbolicPolicy:
        """Add a last action whose score is one minus the sum of the others."""
        total = exprs[0]
        for e in exprs[1:]:
            total = Binary("add", total, e)
        return cls(exprs=list(exprs) + [Binary("sub", Constant(1.0), total)], floor=floor)

    def probabilities(self, states) -> np.ndarray:
        """(T, n_actions) clamped and normalised probabilities."""
        S = np.atleast_2d(np.asarray(states, dtype=float))
        raw = np.column_stack([evaluate(e, S) for e in self.exprs])
        p = np.where(np.isfinite(raw) & (raw > 0), raw, self.floor)
        return p / p.sum(axis=1, keepdims=True)

    def gaussian(self, states) -> tuple[np.ndarray, np.ndarray]:
        S = np.atleast_2d(np.asarray(states, dtype=float))
        mean = np.column_stack([evaluate(e, S) for e in self.means])
        std = np.column_stack([evaluate(e, S) for e in self.stds])
        return mean, np.maximum(nnp.STD_FLOOR, np.where(np.isfinite(std), std, nnp.STD_FLOOR))

    def to_text(self) -> str:
        lines = [f"# floor = {self.floor}"]
        if self.discrete:
            lines += [f"pi(a{i}) = {to_string(e)}" for i, e in enumerate(self.exprs)]
        else:
            for j, (m, s) in enumerate(zip(self.means, self.stds)):
                lines += [f"mu(a{j}) = {to_string(m)}", f"sigma(a{j}) = {to_string(s)}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, d: int | None = None) -> SymbolicPolicy:
        found = {"pi": {}, "mu": {}, "sigma": {}}
        floor = 0.05
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            m = re.match(r"#\s*floor\s*=\s*(\S+)", line)
            if m:
                floor = float(m.group(1))
                continue
            if not line or line.startswith("#"):
                continue
            m = re.match(r"(pi|mu|sigma)\(a(\d+)\)\s*=\s*(.+)$", line)
            if not m:
                raise ValueError(f"line {lineno}: expected 'pi(a<i>) = <expr>', got {line!r}")
            found[m.group(1)][int(m.group(2))] = parse_expr(m.group(3), d)

        def ordered(table):
            if sorted(table) != list(range(len(table))):
                raise ValueError(f"action indices must be 0..n-1, got {sorted(table)}")
            return [table[i] for i in range(len(table))]

        if found["pi"]:
            return cls(exprs=ordered(found["pi"]), floor=floor)
        if not found["mu"] or sorted(found["mu"]) != sorted(found["sigma"]):
            raise ValueError("gaussian policy needs matching mu(a<j>) and sigma(a<j>) lines")
        return cls(means=ordered(found["mu"]), stds=ordered(found["sigma"]), floor=floor)


def eval_symbolic(sym: SymbolicPolicy, state) -> nnp.ActionDistribution:
    if sym.discrete:
        return nnp.Discrete(sym.probabilities(state)[0])
    mean, std = sym.gaussian(state)
    return nnp.Gaussian(mean[0], std[0])


@dataclass
class TrainConfig:
    env: str = "cartpole"
    e_max: int = 2000
    e_tf: int = 400
    e_delta: int = 10
    e_ts: int = 1800
    e_is_start: int = 500
    lr: float = 3e-4
    gamma: float = 0.99
    hidden: tuple[int, ...] = (128,)
    use_sr: bool = True
    sr_target_mode: str = "per_action"
    sym_mode: str = "complement"
    prob_floor: float = 0.05
    ratio_clip: float | None = None
    standardize_targets: bool = True
    seed: int = 0
    log_timing: bool = False
    gp: symreg.GpConfig = field(default_factory=symreg.GpConfig)

    def validate(self) -> None:
        if self.env not in envs_mod.ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}")
        if self.e_max < 1 or self.e_delta < 1:
            raise ConfigError("e_max and e_delta must be >= 1")
        if not self.e_tf < self.e_is_start <= self.e_ts:
            raise ConfigError(
                f"need e_tf < e_is_start <= e_ts, got {self.e_tf}, {self.e_is_start}, {self.e_ts}"
            )
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.sr_target_mode not in ("per_action", "taken_action"):
            raise ConfigError(f"unknown sr_target_mode {self.sr_target_mode!r}")
        if self.sym_mode not in ("complement", "normalize"):
            raise ConfigError(f"unknown sym_mode {self.sym_mode!r}")
        if not 0 < self.prob_floor < 1:
            raise ConfigError("prob_floor must lie in (0, 1)")
        if self.ratio_clip is not None and self.ratio_clip <= 0:
            raise ConfigError("ratio_clip must be positive")
        self.gp.validate()

    def is_sr_episode(self, episode: int) -> bool:
        return self.use_sr and episode >= self.e_tf and episode % self.e_delta == 0

    def is_is_episode(self, episode: int) -> bool:
        return (
            self.use_sr
            and self.e_is_start <= episode <= self.e_ts
            and episode % self.e_delta == 0
        )


# ---------------------------------------------------------------------------
# estimators


def rewards_to_go(rewards, gamma: float) -> np.ndarray:
    """``G_t = r_{t+1} + gamma * G_{t+1}`` with ``G_{T-1} = r_T``."""
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("empty reward sequence")
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    G = np.empty_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        running = r[t] + gamma * running
        G[t] = running
    return G


def mc_gradient(policy: nnp.Mlp, traj: Trajectory, gamma: float) -> np.ndarray:
    """``sum_t grad log pi(a_t|s_t) G_t``."""
    G = rewards_to_go(traj.rewards, gamma)
    return nnp.weighted_grad(policy, traj.states, traj.actions, G)


def importance_ratios(traj: Trajectory, ratio_clip: float | None = None) -> np.ndarray:
    ratio = np.exp(traj.target_logp - traj.behavior_logp)
    if ratio_clip is not None:
        ratio = np.minimum(ratio, ratio_clip)
    return ratio


def is_gradient(
    policy: nnp.Mlp, traj: Trajectory, gamma: float, ratio_clip: float | None = None
) -> np.ndarray:
    """``sum_t [pi(a_t|s_t) / b_t] grad log pi(a_t|s_t) G_t``."""
    G = rewards_to_go(traj.rewards, gamma)
    weights = importance_ratios(traj, ratio_clip) * G
    return nnp.weighted_grad(policy, traj.states, traj.actions, weights)


def mc_update(policy: nnp.Mlp, traj: Trajectory, gamma: float, lr: float) -> nnp.Mlp:
    return nnp.accumulate_and_step(policy, mc_gradient(policy, traj, gamma), lr)


def is_update(
    policy: nnp.Mlp, traj: Trajectory, gamma: float, lr: float, ratio_clip: float | None = None
) -> nnp.Mlp:
    return nnp.accumulate_and_step(policy, is_gradient(policy, traj, gamma, ratio_clip), lr)


# ---------------------------------------------------------------------------
# rollouts


def _distribution(policy, state):
    if isinstance(policy, nnp.Mlp):
        return nnp.forward(policy, state)
    return eval_symbolic(policy, state)


def _logp(dist, action) -> float:
    if isinstance(dist, nnp.Discrete):
        return float(np.log(dist.probs[action]))
    return float(nnp.gaussian_log_density(dist.mean, dist.std, np.asarray(action, dtype=float)))


def run_episode(
    env: envs_mod.Env,
    sampling_policy: nnp.Mlp | SymbolicPolicy,
    eval_policy: nnp.Mlp,
    rng: np.random.Generator,
    seed: int | None = None,
) -> Trajectory:
    """Roll out one episode, choosing actions with ``sampling_policy``.

    The network ``eval_policy`` is queried at every visited state so the
    trajectory carries both the behaviour and the target log probabilities.
    """
    state = env.reset(seed)
    same = sampling_policy is eval_policy
    states, actions, rewards, blogp, tlogp, probs = [], [], [], [], [], []
    while True:
        target = nnp.forward(eval_policy, state)
        behavior = target if same else _distribution(sampling_policy, state)
        action, _ = nnp.sample(behavior, rng)
        b = _logp(behavior, action)
        states.append(state)
        actions.append(action)
        blogp.append(b)
        tlogp.append(b if same else _logp(target, action))
        if isinstance(target, nnp.Discrete):
            probs.append(target.probs)
        result = env.step(action)
        rewards.append(result.reward)
        state = result.next_state
        if result.done:
            break
    return Trajectory(
        states=np.array(states),
        actions=np.array(actions),
        rewards=np.array(rewards, dtype=float),
        behavior_logp=np.array(blogp),
        target_logp=np.array(tlogp),
        action_probs=np.array(probs) if probs else None,
        final_state=np.asarray(state),
    )


# ---------------------------------------------------------------------------
# distillation


def fit_symbolic_policy(
    traj: Trajectory,
    policy: nnp.Mlp,
    cfg: TrainConfig,
    seed: int | None = None,
    warm: dict | None = None,
) -> tuple[SymbolicPolicy, float]:
    """Fit expressions to ``policy`` on the states of ``traj``.

    Returns the symbolic policy and the mean raw MSE over the fits, in the
    units of the network's outputs. With ``cfg.standardize_targets`` each
    target is fitted as ``(y - mean) / std`` and the program is wrapped as
    ``mean + std * program``. ``warm`` (a dict, updated in place) carries
    final GP populations between calls when ``cfg.gp.warm_start`` is set.
    """
    if len(traj) < 2:
        raise ValueError("need a trajectory with at least two steps to fit")
    X = traj.states
    d = X.shape[1]
    gp = cfg.gp
    rng = np.random.default_rng(gp.seed if seed is None else seed)

    def run(key, X_fit, y) -> tuple[Expr, float]:
        gp_k = symreg.GpConfig(**{**gp.__dict__, "seed": int(rng.integers(2**31))})
        initial = warm.get(key) if (warm is not None and gp.warm_start) else None
        center, scale = float(y.mean()), float(y.std())
        # the per-node penalty is absolute, so unit-variance targets keep it
        # from swamping small but real variation in the policy
        rescale = cfg.standardize_targets and scale > _MIN_TARGET_SCALE
        target = (y - center) / scale if rescale else y
        report = symreg.fit(X_fit, target, gp_k, initial_population=initial)
        if warm is not None and gp.warm_start:
            warm[key] = report.population
        if not rescale:
            return report.program, report.raw_fitness
        program = Binary("add", Constant(center), Binary("mul", Constant(scale), report.program))
        return program, report.raw_fitness * scale**2

    if policy.head == "gaussian":
        mean, std = nnp.forward_batch(policy, X)
        fits_m = [run(("mu", j), X, mean[:, j]) for j in range(mean.shape[1])]
        fits_s = [run(("sigma", j), X, std[:, j]) for j in range(std.shape[1])]
        sym = SymbolicPolicy(means=[f[0] for f in fits_m], stds=[f[0] for f in fits_s], floor=cfg.prob_floor)
        return sym, float(np.mean([f[1] for f in fits_m + fits_s]))

    probs = nnp.forward_batch(policy, X)
    K = probs.shape[1]
    if cfg.sr_target_mode == "taken_action":
        # the action index rides along as an extra input variable s<d>
        a = traj.actions.astype(float)
        program, mse = run(("taken",), np.column_stack([X, a]), probs[np.arange(len(a)), traj.actions])
        exprs = [substitute(program, d, float(i)) for i in range(K)]
        return SymbolicPolicy(exprs=exprs, floor=cfg.prob_floor), mse

    n_fit = K - 1 if cfg.sym_mode == "complement" else K
    fits = [run(("pi", i), X, probs[:, i]) for i in range(n_fit)]
    exprs = [f[0] for f in fits]
    if cfg.sym_mode == "complement":
        sym = SymbolicPolicy.complement(exprs, floor=cfg.prob_floor)
    else:
        sym = SymbolicPolicy(exprs=exprs, floor=cfg.prob_floor)
    return sym, float(np.mean([f[1] for f in fits]))


# ---------------------------------------------------------------------------
# training


def moving_average(series, window: int = 50) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what exists."""
    x = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def network_sizes(cfg: TrainConfig) -> tuple[list[int], str]:
    spec = envs_mod.spec(cfg.env)
    head = "softmax" if spec.discrete else "gaussian"
    return [spec.state_dim, *cfg.hidden, spec.n_actions], head


@dataclass
class TrainResult:
    policy: nnp.Mlp
    symbolic: SymbolicPolicy | None
    log: list[dict]

    @property
    def returns(self) -> np.ndarray:
        return np.array([row["return"] for row in self.log])


def train(cfg: TrainConfig) -> TrainResult:
    """Run the full schedule. Bit-reproducible for a fixed ``cfg``."""
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    init_rng, act_rng, sr_rng = (np.random.default_rng(s) for s in seeds[:3])
    env = envs_mod.make(cfg.env, int(seeds[3].generate_state(1)[0]))
    sizes, head = network_sizes(cfg)
    policy = nnp.init(sizes, init_rng, head)
    sym: SymbolicPolicy | None = None
    warm: dict = {}
    returns: list[float] = []
    rows: list[dict] = []

    for episode in range(1, cfg.e_max + 1):
        start = time.perf_counter()
        if cfg.is_is_episode(episode) and sym is not None:
            kind = "is"
            traj = run_episode(env, sym, policy, act_rng)
            is_update(policy, traj, cfg.gamma, cfg.lr, cfg.ratio_clip)
        else:
            kind = "mc"
            traj = run_episode(env, policy, policy, act_rng)
            mc_update(policy, traj, cfg.gamma, cfg.lr)

        fit_mse = None
        if cfg.is_sr_episode(episode):
            fit_seed = int(sr_rng.integers(2**31))
            try:
                sym, fit_mse = fit_symbolic_policy(traj, policy, cfg, seed=fit_seed, warm=warm)
            except ValueError as exc:
                log.warning("episode %d: symbolic fit failed (%s); keeping previous policy", episode, exc)

        returns.append(traj.total_return)
        rows.append(
            {
                "episode": episode,
                "return": traj.total_return,
                "ma50_return": float(moving_average(returns[-50:], 50)[-1]),
                "update_kind": kind,
                "sr_fit_mse": fit_mse,
                "wall_ms": (time.perf_counter() - start) * 1e3 if cfg.log_timing else None,
            }
        )
        if episode % 100 == 0:
            log.info("episode %d  ma50 %.1f", episode, rows[-1]["ma50_return"])
    return TrainResult(policy, sym, rows)


def format_log(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for row in rows:
        writer.writerow(
            [
                row["episode"],
                repr(float(row["return"])),
                repr(float(row["ma50_return"])),
                row["update_kind"],
                "" if row["sr_fit_mse"] is None else repr(float(row["sr_fit_mse"])),
                "" if row["wall_ms"] is None else f"{row['wall_ms']:.3f}",
            ]
        )
    return buf.getvalue()


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for r in reader:
            rows.append(
                {
                    "episode": int(r["episode"]),
                    "return": float(r["return"]),
                    "ma50_return": float(r["ma50_return"]),
                    "update_kind": r["update_kind"],
                    "sr_fit_mse": float(r["sr_fit_mse"]) if r["sr_fit_mse"] else None,
                    "wall_ms": float(r["wall_ms"]) if r["wall_ms"] else None,
                }
            )
        return rows


def atomic_write(path, data: str | bytes) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    tmp = f"{path}.tmp{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# variance diagnostic


@dataclass
class VarianceReport:
    n_batches: int
    mean_mc: np.ndarray
    mean_is: np.ndarray
    var_mc: np.ndarray
    var_is: np.ndarray

    @property
    def trace_var_mc(self) -> float:
        return float(self.var_mc.sum())

    @property
    def trace_var_is(self) -> float:
        return float(self.var_is.sum())

    @property
    def ratio(self) -> float:
        return self.trace_var_is / self.trace_var_mc

    def stderr(self, which: str) -> np.ndarray:
        var = self.var_mc if which == "mc" else self.var_is
        return np.sqrt(var / self.n_batches)

    def summary(self) -> str:
        return (
            f"tr(Var[g_mc]) = {self.trace_var_mc:.6g}\n"
            f"tr(Var[g_is]) = {self.trace_var_is:.6g}\n"
            f"ratio is/mc   = {self.ratio:.6g}"
        )


class _Welford:
    def __init__(self, n):
        self.k = 0
        self.mean = np.zeros(n)
        self.m2 = np.zeros(n)

    def add(self, x):
        self.k += 1
        delta = x - self.mean
        self.mean += delta / self.k
        self.m2 += delta * (x - self.mean)

    @property
    def var(self):
        return self.m2 / max(self.k - 1, 1)


def variance_diagnostic(
    policy: nnp.Mlp,
    sym: SymbolicPolicy | nnp.Mlp,
    env: envs_mod.Env,
    n_batches: int,
    rng: np.random.Generator,
    gamma: float = 0.99,
    ratio_clip: float | None = None,
) -> VarianceReport:
    """Empirical mean and per-coordinate variance of both gradient estimators.

    Each batch is one trajectory: ``g_mc`` from a rollout of ``policy`` and
    ``g_is`` from a rollout of ``sym``. ``policy`` is not updated.
    """
    acc_mc, acc_is = _Welford(policy.n_params), _Welford(policy.n_params)
    for _ in range(n_batches):
        traj = run_episode(env, policy, policy, rng)
        acc_mc.add(mc_gradient(policy, traj, gamma))
        traj = run_episode(env, sym, policy, rng)
        acc_is.add(is_gradient(policy, traj, gamma, ratio_clip))
    return VarianceReport(n_batches, acc_mc.mean, acc_is.mean, acc_mc.var, acc_is.var)


def variance_optimal_proposal(probs, action_values, floor: float = 0.0) -> np.ndarray:
    """Sampling distribution proportional to ``pi(a|s) * |Q(s, a)|``.

    Rows with no value mass fall back to ``probs``.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    w = probs * np.abs(np.atleast_2d(np.asarray(action_values, dtype=float)))
    total = w.sum(axis=1, keepdims=True)
    q = np.where(total > 0, w / np.where(total > 0, total, 1.0), probs)
    if floor:
        q = np.maximum(q, floor)
        q = q / q.sum(axis=1, keepdims=True)
    return q
