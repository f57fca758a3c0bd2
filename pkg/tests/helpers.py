"""Shared test utilities."""

import numpy as np

from sreinforce import neuralpolicy as nnp


def fd_grad_log_prob(policy, state, action, h=1e-6):
    """Central finite differences of log pi(action|state) over the flat parameters."""
    theta = policy.get_flat()
    probe = policy.copy()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] += h
        probe.set_flat(bumped)
        up = nnp.log_prob(probe, state[None, :], [action])[0]
        bumped[i] -= 2 * h
        probe.set_flat(bumped)
        down = nnp.log_prob(probe, state[None, :], [action])[0]
        grad[i] = (up - down) / (2 * h)
    return grad


def max_relative_error(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def random_case(rng, head):
    """A small random network with a random state and action for gradient checks."""
    d = int(rng.integers(1, 5))
    hidden = [int(h) for h in rng.integers(2, 7, size=rng.integers(1, 3))]
    k = int(rng.integers(1, 4)) if head == "gaussian" else int(rng.integers(2, 5))
    policy = nnp.init([d, *hidden, k], rng, head)
    state = rng.normal(size=d)
    if head == "softmax":
        action = int(rng.integers(k))
    else:
        action = rng.normal(size=k)
    return policy, state, action
