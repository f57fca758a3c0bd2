"""Feed-forward policy network with hand-written backpropagation.

Two heads are supported: a softmax over discrete actions, and a diagonal
Gaussian whose mean and log standard deviation come from separate output
layers on top of a shared tanh trunk. Gradients of ``log pi(a|s)`` are exact;
parameters are updated by Adam in the ascent direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

STD_FLOOR = 0.01
CHECKPOINT_VERSION = 1
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class Discrete:
    probs: np.ndarray


@dataclass
class Gaussian:
    mean: np.ndarray
    std: np.ndarray


ActionDistribution = Discrete | Gaussian


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray
    activation: str = "tanh"


@dataclass
class Mlp:
    """Policy network.

    ``layers`` is the trunk. For a softmax head the last trunk layer produces
    logits (identity activation). For a Gaussian head the trunk ends in a
    hidden layer and ``mean_layer``/``logstd_layer`` read from it.
    """

    layers: list[Layer]
    head: str = "softmax"
    mean_layer: Layer | None = None
    logstd_layer: Layer | None = None
    adam_m: list[np.ndarray] = field(default_factory=list, repr=False)
    adam_v: list[np.ndarray] = field(default_factory=list, repr=False)
    adam_t: int = 0

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.all_layers:
            out += [layer.W, layer.b]
        return out

    @property
    def all_layers(self) -> list[Layer]:
        extra = [self.mean_layer, self.logstd_layer] if self.head == "gaussian" else []
        return self.layers + extra

    @property
    def state_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def action_dim(self) -> int:
        if self.head == "gaussian":
            return self.mean_layer.W.shape[0]
        return self.layers[-1].W.shape[0]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        i = 0
        for p in self.params:
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> Mlp:
        def cp(layer):
            return None if layer is None else Layer(layer.W.copy(), layer.b.copy(), layer.activation)

        return Mlp(
            [cp(l) for l in self.layers],
            self.head,
            cp(self.mean_layer),
            cp(self.logstd_layer),
            [m.copy() for m in self.adam_m],
            [v.copy() for v in self.adam_v],
            self.adam_t,
        )


def _xavier(rng, n_in, n_out):
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def init(sizes: Sequence[int], rng: np.random.Generator, head: str = "softmax") -> Mlp:
    """Build a network with Xavier-uniform weights and zero biases.

    ``sizes`` runs from the state dimension to the output size, e.g.
    ``[4, 128, 2]``. With ``head="gaussian"`` the last entry is the action
    dimension and both the mean and log-std layers get that many outputs.
    """
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"bad layer sizes {sizes}")
    if head not in ("softmax", "gaussian"):
        raise ValueError(f"unknown head {head!r}")
    trunk_sizes = sizes if head == "softmax" else sizes[:-1]
    layers = []
    for i, (n_in, n_out) in enumerate(zip(trunk_sizes[:-1], trunk_sizes[1:])):
        last = head == "softmax" and i == len(trunk_sizes) - 2
        layers.append(Layer(_xavier(rng, n_in, n_out), np.zeros(n_out), "identity" if last else "tanh"))
    mean_layer = logstd_layer = None
    if head == "gaussian":
        if len(sizes) < 3:
            raise ValueError("a gaussian head needs at least one hidden layer")
        n_in, m = sizes[-2], sizes[-1]
        mean_layer = Layer(_xavier(rng, n_in, m), np.zeros(m), "identity")
        logstd_layer = Layer(_xavier(rng, n_in, m), np.zeros(m), "identity")
    return Mlp(layers, head, mean_layer, logstd_layer)


# ---------------------------------------------------------------------------
# forward / backward


def _trunk(policy: Mlp, S: np.ndarray):
    acts = [S]
    h = S
    for layer in policy.layers:
        z = h @ layer.W.T + layer.b
        h = np.tanh(z) if layer.activation == "tanh" else z
        acts.append(h)
    return acts


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _gaussian_params(policy: Mlp, h: np.ndarray):
    mean = h @ policy.mean_layer.W.T + policy.mean_layer.b
    logstd = h @ policy.logstd_layer.W.T + policy.logstd_layer.b
    std = np.maximum(np.exp(logstd), STD_FLOOR)
    return mean, logstd, std


def forward_batch(policy: Mlp, S) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Action probabilities (T, n) for a softmax head, else (mean, std)."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    h = _trunk(policy, S)[-1]
    if policy.head == "softmax":
        return _softmax(h)
    mean, _, std = _gaussian_params(policy, h)
    return mean, std


def forward(policy: Mlp, state) -> ActionDistribution:
    state = np.asarray(state, dtype=float)
    if state.shape != (policy.state_dim,):
        raise ValueError(f"expected state of length {policy.state_dim}, got shape {state.shape}")
    if not np.all(np.isfinite(state)):
        raise ValueError(f"non-finite state {state}")
    out = forward_batch(policy, state[None, :])
    if policy.head == "softmax":
        return Discrete(out[0])
    return Gaussian(out[0][0], out[1][0])


def sample(dist: ActionDistribution, rng: np.random.Generator):
    """Draw an action; returns ``(action, probability or joint density)``."""
    if isinstance(dist, Discrete):
        cdf = np.cumsum(dist.probs)
        a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        a = min(a, len(cdf) - 1)
        return a, float(dist.probs[a])
    a = dist.mean + dist.std * rng.standard_normal(dist.mean.shape)
    return a, density(dist, a)


def density(dist: Gaussian, action) -> float:
    return float(np.exp(gaussian_log_density(dist.mean, dist.std, np.asarray(action, dtype=float))))


def gaussian_log_density(mean, std, action):
    z = (action - mean) / std
    return np.sum(-0.5 * z * z - np.log(std) - 0.5 * _LOG_2PI, axis=-1)


def log_prob(policy: Mlp, states, actions) -> np.ndarray:
    """``log pi(a_t|s_t)`` for every row."""
    S = np.atleast_2d(np.asarray(states, dtype=float))
    if policy.head == "softmax":
        p = forward_batch(policy, S)
        a = np.asarray(actions, dtype=int).reshape(-1)
        return np.log(p[np.arange(len(a)), a])
    mean, std = forward_batch(policy, S)
    A = np.asarray(actions, dtype=float).reshape(mean.shape)
    return gaussian_log_density(mean, std, A)


def weighted_grad(policy: Mlp, states, actions, weights) -> np.ndarray:
    """Flat gradient of ``sum_t weights[t] * log pi(a_t|s_t)``."""
    S = np.atleast_2d(np.asarray(states, dtype=float))
    w = np.asarray(weights, dtype=float).reshape(-1, 1)
    acts = _trunk(policy, S)
    h = acts[-1]
    head_grads = []
    if policy.head == "softmax":
        a = np.asarray(actions, dtype=int).reshape(-1)
        delta = -_softmax(h)
        delta[np.arange(len(a)), a] += 1.0
        delta *= w
    else:
        mean, logstd, std = _gaussian_params(policy, h)
        A = np.asarray(actions, dtype=float).reshape(mean.shape)
        z = (A - mean) / std
        d_mean = w * z / std
        # the floor cuts the gradient path to the log-std layer
        d_logstd = w * (z * z - 1.0) * (np.exp(logstd) > STD_FLOOR)
        for g in (d_mean, d_logstd):
            head_grads += [g.T @ h, g.sum(axis=0)]
        delta = d_mean @ policy.mean_layer.W + d_logstd @ policy.logstd_layer.W
        if policy.layers[-1].activation == "tanh":
            delta = delta * (1.0 - h * h)

    # delta is now the gradient w.r.t. the pre-activation of the top trunk layer
    grads = []
    for i in range(len(policy.layers) - 1, -1, -1):
        layer = policy.layers[i]
        grads = [delta.T @ acts[i], delta.sum(axis=0)] + grads
        if i:
            delta = delta @ layer.W
            if policy.layers[i - 1].activation == "tanh":
                delta = delta * (1.0 - acts[i] ** 2)
    return np.concatenate([g.ravel() for g in grads + head_grads])


def grad_log_prob(policy: Mlp, state, action) -> np.ndarray:
    """Flat gradient of ``log pi(action|state)`` over all parameters."""
    return weighted_grad(policy, np.asarray(state, dtype=float)[None, :], [action], [1.0])


# ---------------------------------------------------------------------------
# optimisation


def accumulate_and_step(
    policy: Mlp,
    grad: np.ndarray,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Mlp:
    """One Adam step in the direction of ``grad`` (gradient ascent).

    ``grad`` is the summed, already weighted gradient of one episode.
    Updates ``policy`` in place and returns it.
    """
    params = policy.params
    if not policy.adam_m:
        policy.adam_m = [np.zeros_like(p) for p in params]
        policy.adam_v = [np.zeros_like(p) for p in params]
    policy.adam_t += 1
    t = policy.adam_t
    i = 0
    for p, m, v in zip(params, policy.adam_m, policy.adam_v):
        g = grad[i : i + p.size].reshape(p.shape)
        i += p.size
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p += learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise FloatingPointError("non-finite policy parameters after update")
    return policy


# ---------------------------------------------------------------------------
# checkpoints
#
# A checkpoint is an ``.npz`` archive. ``meta`` holds a JSON document
# {"version": 1, "head": ..., "layers": [{"name", "shape", "activation"}...],
# "adam_t": ...}; every layer contributes arrays ``<name>.W`` (row-major,
# shape (out, in)) and ``<name>.b``. Trunk layers are named ``L0``, ``L1``...;
# the Gaussian output layers are ``mean`` and ``logstd``.


def _named_layers(policy: Mlp):
    named = [(f"L{i}", l) for i, l in enumerate(policy.layers)]
    if policy.head == "gaussian":
        named += [("mean", policy.mean_layer), ("logstd", policy.logstd_layer)]
    return named


def save(policy: Mlp, path) -> None:
    arrays = {}
    meta = {"version": CHECKPOINT_VERSION, "head": policy.head, "adam_t": policy.adam_t, "layers": []}
    for name, layer in _named_layers(policy):
        meta["layers"].append({"name": name, "shape": list(layer.W.shape), "activation": layer.activation})
        arrays[f"{name}.W"] = layer.W
        arrays[f"{name}.b"] = layer.b
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load(path) -> Mlp:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        layers = {}
        for spec in meta["layers"]:
            W = data[f"{spec['name']}.W"].astype(float)
            if list(W.shape) != spec["shape"]:
                raise ValueError(f"layer {spec['name']} has shape {W.shape}, expected {spec['shape']}")
            layers[spec["name"]] = Layer(W, data[f"{spec['name']}.b"].astype(float), spec["activation"])
    trunk = [layers[f"L{i}"] for i in range(sum(1 for k in layers if k.startswith("L")))]
    policy = Mlp(trunk, meta["head"], layers.get("mean"), layers.get("logstd"))
    policy.adam_t = 0
    return policy
