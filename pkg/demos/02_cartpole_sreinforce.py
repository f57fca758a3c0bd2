"""A shortened S-REINFORCE run on CartPole, then both policies side by side.

The full preset (2000 episodes, GP population 2000) takes a while on one
core; this demo trims it to 700 episodes and population 300 so that symbolic
fits start at episode 400 and importance-sampled updates run from 500 to 600.

Run: python3 demos/02_cartpole_sreinforce.py
"""

# %%
import logging

import numpy as np

from sreinforce import config, envs, trainer
from sreinforce import neuralpolicy as nnp

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg, _ = config.load(
    config.preset_text("cartpole"),
    ["trainer.e_max=700", "trainer.e_ts=600", "gp.population_size=300"],
)
result = trainer.train(cfg)
print("last-50 mean return:", result.returns[-50:].mean())

# %%
kinds = [row["update_kind"] for row in result.log]
print("IS updates:", kinds.count("is"), "| SR fits:", sum(r["sr_fit_mse"] is not None for r in result.log))
print(result.symbolic.to_text())

# %%
# Roll out each policy greedily from the same start states.
def greedy_return(policy, seed):
    env = envs.make("cartpole", seed)
    state, total = env.reset(), 0.0
    while True:
        if isinstance(policy, nnp.Mlp):
            probs = nnp.forward(policy, state).probs
        else:
            probs = policy.probabilities(state)[0]
        step = env.step(int(np.argmax(probs)))
        total += step.reward
        state = step.next_state
        if step.done:
            return total


neural = [greedy_return(result.policy, s) for s in range(20)]
symbolic = [greedy_return(result.symbolic, s) for s in range(20)]
print(f"greedy neural   {np.mean(neural):6.1f} ± {np.std(neural):.1f}")
print(f"greedy symbolic {np.mean(symbolic):6.1f} ± {np.std(symbolic):.1f}")
