"""Command-line front end.

    sreinforce train --preset cartpole --seeds 5 --out runs/cartpole
    sreinforce fit-sr data.csv --population 500
    sreinforce eval --checkpoint runs/cartpole/seed_0/checkpoint.npz --env cartpole
    sreinforce diag-variance --checkpoint ... --policy ... --env cartpole
    sreinforce plot runs/cartpole/seed_*/log.csv --out curve.svg

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import envs as envs_mod
from . import neuralpolicy as nnp
from . import report, symreg, trainer
from .exprtree import BasisSet, ExprError

log = logging.getLogger("sreinforce")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


# ---------------------------------------------------------------------------
# train


def _run_seed(args):
    cfg, seed_dir = args
    result = trainer.train(cfg)
    seed_dir = Path(seed_dir)
    seed_dir.mkdir(parents=True, exist_ok=True)
    trainer.atomic_write(seed_dir / "log.csv", trainer.format_log(result.log))
    tmp = seed_dir / "checkpoint.npz.tmp"
    nnp.save(result.policy, tmp)
    os.replace(tmp, seed_dir / "checkpoint.npz")
    if result.symbolic is not None:
        trainer.atomic_write(seed_dir / "policy.txt", result.symbolic.to_text())
    return report.last_window_mean(result.returns), result.symbolic.to_text() if result.symbolic else None


def _resolve_config(args) -> tuple[trainer.TrainConfig, config_mod.RunOptions, str]:
    if args.preset and args.config:
        raise UsageError("use either --preset or --config, not both")
    if args.config:
        text = _existing(args.config).read_text()
        name = Path(args.config).stem
    elif args.preset:
        name = args.preset
        text = config_mod.preset_text(name)
    else:
        raise UsageError("one of --preset or --config is required")
    overrides = list(args.set or [])
    if args.e_max is not None:
        overrides.append(f"trainer.e_max={args.e_max}")
    if args.baseline:
        overrides.append("trainer.use_sr=false")
    if args.seeds is not None:
        overrides.append(f"run.seeds={args.seeds}")
    if args.jobs is not None:
        overrides.append(f"run.jobs={args.jobs}")
    cfg, run = config_mod.load(text, overrides)
    return cfg, run, name


def cmd_train(args) -> int:
    cfg, run, name = _resolve_config(args)
    if args.out:
        out = Path(args.out)
    else:
        default_name = name + ("" if cfg.use_sr else "-baseline")
        out = Path(os.environ.get("SYMPOL_OUT_DIR", "runs")) / (args.name or default_name)
    if run.seeds < 1 or run.jobs < 1:
        raise UsageError("--seeds and --jobs must be >= 1")
    existing = out / "config.ini"
    if existing.exists() and not args.force:
        raise UsageError(f"{out} already holds a run; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    trainer.atomic_write(out / "config.ini", config_mod.dump(cfg, run))

    jobs = []
    for seed in range(run.seeds):
        seed_cfg = config_mod.load(config_mod.dump(cfg))[0]
        seed_cfg.seed = seed
        jobs.append((seed_cfg, str(out / f"seed_{seed}")))
    if run.jobs > 1:
        with ProcessPoolExecutor(max_workers=run.jobs) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]

    finals = [r[0] for r in results]
    for seed, (final, sym_text) in enumerate(results):
        print(f"seed {seed}: last-50 mean return {final:.1f}")
        if sym_text:
            for line in sym_text.splitlines():
                if not line.startswith("#"):
                    print(f"  {line}")
    curves = [[row["return"] for row in trainer.read_log(out / f"seed_{s}" / "log.csv")] for s in range(run.seeds)]
    label = "S-REINFORCE" if cfg.use_sr else "REINFORCE"
    trainer.atomic_write(out / "returns.svg", report.plot_svg({label: curves}, title=cfg.env))
    print(report.summary_line(finals))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-sr


def read_xy(path) -> tuple[np.ndarray, np.ndarray]:
    """Headered CSV with columns ``s0..s{d-1}`` and ``y``."""
    with open(_existing(path), newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        try:
            rows = [[float(x) for x in row] for row in reader if row]
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from None
    if "y" not in header:
        raise UsageError(f"{path}: header needs a 'y' column")
    features = [h for h in header if h != "y"]
    expected = [f"s{i}" for i in range(len(features))]
    if features != expected:
        raise UsageError(f"{path}: feature columns must be {expected}, got {features}")
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise UsageError(f"{path}: need at least two data rows")
    y_col = header.index("y")
    X = np.delete(data, y_col, axis=1)
    return X, data[:, y_col]


def cmd_fit_sr(args) -> int:
    X, y = read_xy(args.csv)
    basis = BasisSet.from_names(args.basis.split(","))
    cfg = symreg.GpConfig(
        population_size=args.population,
        tournament_size=args.tournament,
        generations=args.generations,
        parsimony_coefficient=args.parsimony,
        p_crossover=args.p_crossover,
        p_subtree_mutation=args.p_subtree,
        p_hoist_mutation=args.p_hoist,
        p_point_mutation=args.p_point,
        basis=basis,
        seed=args.seed,
    )
    try:
        cfg.validate()
    except symreg.GpConfigError as exc:
        raise UsageError(str(exc)) from None
    fit = symreg.fit(X, y, cfg)
    print(f"expression: {fit.program}")
    print(f"raw_mse: {fit.raw_fitness!r}")
    print(f"penalized: {fit.fitness!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / diag-variance


def _load_policy(args, env_spec):
    if bool(args.checkpoint) == bool(args.policy):
        raise UsageError("give exactly one of --checkpoint or --policy")
    if args.checkpoint:
        net = nnp.load(_existing(args.checkpoint))
        if net.state_dim != env_spec.state_dim:
            raise UsageError(f"checkpoint expects state dimension {net.state_dim}, env has {env_spec.state_dim}")
        return net
    return trainer.SymbolicPolicy.from_text(_existing(args.policy).read_text(), env_spec.state_dim)


def _greedy(dist):
    if isinstance(dist, nnp.Discrete):
        return int(np.argmax(dist.probs))
    return dist.mean


def cmd_eval(args) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    env = envs_mod.make(args.env, args.seed)
    policy = _load_policy(args, env.spec)
    rng = np.random.default_rng(args.seed)
    returns = []
    for _ in range(args.episodes):
        state = env.reset()
        total = 0.0
        while True:
            if isinstance(policy, nnp.Mlp):
                dist = nnp.forward(policy, state)
            else:
                dist = trainer.eval_symbolic(policy, state)
            action = _greedy(dist) if args.greedy else nnp.sample(dist, rng)[0]
            step = env.step(action)
            total += step.reward
            state = step.next_state
            if step.done:
                break
        returns.append(total)
    kind = "neural" if isinstance(policy, nnp.Mlp) else "symbolic"
    print(f"{kind} policy on {args.env}, {args.episodes} episodes ({'greedy' if args.greedy else 'sampled'})")
    print(report.summary_line(returns, "return"))
    return EXIT_OK


def cmd_diag_variance(args) -> int:
    env = envs_mod.make(args.env, args.seed)
    net = nnp.load(_existing(args.checkpoint))
    sym = trainer.SymbolicPolicy.from_text(_existing(args.policy).read_text(), env.spec.state_dim)
    rng = np.random.default_rng(args.seed)
    rep = trainer.variance_diagnostic(net, sym, env, args.batches, rng, gamma=args.gamma)
    print(rep.summary())
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot


def cmd_plot(args) -> int:
    groups: dict[str, list] = {}
    for item in args.logs:
        label, sep, path = item.rpartition("=")
        label = label if sep else "returns"
        groups.setdefault(label, []).append([row["return"] for row in trainer.read_log(_existing(path))])
    svg = report.plot_svg(groups, window=args.window, title=args.title or "")
    trainer.atomic_write(args.out, svg)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sreinforce", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a preset or config file, one run per seed")
    p.add_argument("--preset", choices=config_mod.PRESETS)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seeds", type=int, help="number of seeds (0..N-1)")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--out", help="run directory (default $SYMPOL_OUT_DIR/<preset>)")
    p.add_argument("--name", help="run name under the default output root")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("--e-max", type=int, help="shortcut for --set trainer.e_max=N")
    p.add_argument("--baseline", action="store_true", help="plain REINFORCE (no symbolic fits or IS)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-sr", help="symbolic regression on a CSV with columns s0..s{d-1}, y")
    p.add_argument("csv")
    p.add_argument("--population", type=int, default=500)
    p.add_argument("--tournament", type=int, default=20)
    p.add_argument("--generations", type=int, default=20)
    p.add_argument("--parsimony", type=float, default=0.005)
    p.add_argument("--p-crossover", type=float, default=0.7)
    p.add_argument("--p-subtree", type=float, default=0.1)
    p.add_argument("--p-hoist", type=float, default=0.05)
    p.add_argument("--p-point", type=float, default=0.1)
    p.add_argument("--basis", default="add,sub,mul,div,inv,cos")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_sr)

    p = sub.add_parser("eval", help="evaluate a neural checkpoint or a symbolic policy file")
    p.add_argument("--checkpoint")
    p.add_argument("--policy", help="symbolic policy file (pi(a<i>) = ... lines)")
    p.add_argument("--env", required=True, choices=sorted(envs_mod.ENVIRONMENTS))
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diag-variance", help="compare gradient-estimator variances")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--env", required=True, choices=sorted(envs_mod.ENVIRONMENTS))
    p.add_argument("--batches", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diag_variance)

    p = sub.add_parser("plot", help="SVG of cross-seed moving-average returns")
    p.add_argument("logs", nargs="+", help="log CSVs, optionally LABEL=path to group curves")
    p.add_argument("--out", default="returns.svg")
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (UsageError, trainer.ConfigError, ExprError, envs_mod.EnvError) as exc:
        print(f"sreinforce {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"sreinforce {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
