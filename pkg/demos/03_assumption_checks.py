"""
Numerically certifying solvability conditions
=============================================

Before trusting a learning run, the oracle checkers measure the constants
the convergence story depends on:

- herding slack kappa_hat: how badly sampled policy pairs violate the
  crowd-following inequality at a given rho (0 means perfectly solvable);
- contraction factor delta_hat of the mean-field consistency map;
- mixing time of the state chain;
- the Fisher information's smallest eigenvalue off the softmax nullspace.

Equivalent command line:

    herdmfg verify --env '{"family": "example1", ...}' --checks herding,delta
"""

from herdmfg import example1_env, synthetic_env, verify_environment

# The crowd-attraction game with a mean-field independent kernel satisfies
# the herding inequality exactly (kappa = 0) at rho = exponent + 1.
env = example1_env(10, 10, q=1.0, p_exp=1.0, kernel_seed=42)
report = verify_environment(env, ["herding", "delta", "mixing", "fisher"], rho=2.0, n_pairs=300)
print("crowd-attraction game (mean-field independent kernel)")
for name, entry in report["checks"].items():
    status = "PASS" if entry["passed"] else "FAIL"
    detail = {k: v for k, v in entry.items() if k not in ("passed", "note")}
    print(f"  {name:8s} {status}  {detail}")

# The flipped-sign variant is crowd-averse: the herding check must report a
# strictly positive slack.
env2 = synthetic_env("env2", 10, seed=42)
report2 = verify_environment(env2, ["herding"], rho=2.0, n_pairs=300)
kappa = report2["checks"]["herding"]["kappa_hat"]
print(f"\nflipped-sign variant: kappa_hat = {kappa:.3e} (> 0, as expected)")

# A mean-field dependent kernel: the contraction factor stays below 1, so
# the induced mean field is computable by fixed-point iteration.
env3 = synthetic_env("env3", 10, seed=42)
report3 = verify_environment(env3, ["delta"])
print(f"mean-field dependent kernel: delta_hat = {report3['checks']['delta']['delta_hat']:.3f}")
