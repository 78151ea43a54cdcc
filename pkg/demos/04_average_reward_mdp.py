"""
The degenerate case: average-reward MDP actor-critic
====================================================

When neither kernel nor reward depends on the mean field, the game is a
plain average-reward MDP and the solver drops the mean-field updates.
Relative value iteration on the known model provides the exact optimum to
compare against.
"""

from herdmfg import (
    MeanField,
    SolverConfig,
    average_reward,
    best_response_value,
    mdp_ac_run,
    practical_schedule,
    random_mdp,
    softmax_table,
)

env = random_mdp(5, 3, seed=7)
mu = MeanField.uniform(5)  # ignored by the environment, required by the API

opt_gain, opt_policy = best_response_value(env, mu)
print(f"optimal gain (relative value iteration): {opt_gain:.4f}")
print(f"optimal actions per state:               {opt_policy.probs.argmax(axis=1)}")

config = SolverConfig(
    schedule=practical_schedule(), max_iters=100_000, metric_every=20_000, seed=0
)
records, state = mdp_ac_run(env, config, return_state=True)

learned = softmax_table(state.theta)
learned_gain = average_reward(env, learned, mu)
print(f"\nlearned gain after {config.max_iters} samples: {learned_gain:.4f}")
print(f"optimality gap:                          {opt_gain - learned_gain:.4f}")
print(f"learned greedy actions:                  {learned.probs.argmax(axis=1)}")
print("\nsquared gradient norm along the run:")
for r in records:
    print(f"  k={r.k:6d}  ||grad||^2 = {r.eps_pi:.2e}   J_hat = {r.j_hat:.4f}")
