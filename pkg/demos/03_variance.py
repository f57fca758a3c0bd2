"""Gradient-estimator variance on a two-context bandit.

Reward is 1 when the action matches the context. The importance-sampled
estimator draws actions from a symbolic proxy and reweights by
pi_theta / proxy. How its variance compares with plain Monte Carlo depends
entirely on the proxy:

* a proxy equal to pi_theta gives the same estimator, so equal variance;
* a proxy fitted to pi_theta * |Q|, the variance-minimising sampler, wins;
* a proxy that favours the unrewarded action loses badly.

Run: python3 demos/03_variance.py
"""

# %%
import numpy as np

from sreinforce import envs, symreg, trainer
from sreinforce import neuralpolicy as nnp

policy = nnp.init([2, 8, 2], np.random.default_rng(7))
states = np.eye(2)
probs = nnp.forward_batch(policy, states)
print("pi_theta(a|s):\n", probs.round(3))

# %%
optimal = trainer.variance_optimal_proposal(probs, states)


def fitted(target):
    fit = symreg.fit(np.repeat(states, 20, axis=0), np.repeat(target, 20), symreg.GpConfig(population_size=300))
    return trainer.SymbolicPolicy.complement([fit.program])


proxies = {
    "equal to pi_theta": policy.copy(),
    "fitted to pi*|Q|": fitted(optimal[:, 0]),
    "mismatched": fitted(1.0 - optimal[:, 0]),
}

# %%
for name, proxy in proxies.items():
    rep = trainer.variance_diagnostic(policy, proxy, envs.TwoState(0), 5000, np.random.default_rng(1))
    print(f"{name:>18}: tr Var mc {rep.trace_var_mc:.3f}  is {rep.trace_var_is:.3f}  ratio {rep.ratio:.2f}")
