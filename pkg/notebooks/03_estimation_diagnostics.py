# %% [markdown]
# # Estimation error and the quantities behind it
#
# The harness logs diagnostics at checkpoints: the L1 error of the current
# estimate, the high-probability envelope for it, and the exploration
# count. Here we read them back and also estimate the compatibility
# constant of the empirical average-context Gram matrix on a small problem.

# %%
import numpy as np

from drlasso.diagnostics import GramAccumulator, accumulate_gram, estimate_compatibility
from drlasso.environment import EnvironmentConfig, SparseLinearBandit
from drlasso.harness import load_config, run_experiment

config = load_config({
    "environment": {"n_arms": 10, "cross_arm_correlation": 0.3},
    "horizon": 1600, "replications": 5, "policy": {"name": "dr"},
    "checkpoints": [100, 200, 400, 800, 1600],
})
results = run_experiment(config)

# %%
print(f"{'t':>5} {'median L1 error':>16} {'envelope':>10} {'explored':>9} {'expected':>9}")
for t in config.checkpoint_list:
    rows = [d for r in results for d in r.diagnostics if d.t == t]
    pick = lambda key: np.median([d.value for d in rows if d.name == key])
    print(f"{t:>5} {pick('l1_error'):>16.3f} {pick('l1_bound'):>10.1f} "
          f"{pick('exploration_count'):>9.0f} {pick('exploration_rate_sum'):>9.1f}")

# %% [markdown]
# The envelope is far above the measured error: it uses worst-case constants
# and an unknown compatibility constant set to 1. Its *shape* in t is what
# the measured error tracks, roughly `sqrt(log t / t)`.
#
# The compatibility constant itself can be estimated for a small dimension
# by searching the cone of directions dominated by the true support.

# %%
small = EnvironmentConfig(n_arms=10, dim=12, sparsity=3, cross_arm_correlation=0.7)
env = SparseLinearBandit.from_seed(small, replication=0)
acc = GramAccumulator.zeros(small.dim)
for _ in range(2000):
    accumulate_gram(acc, env.contexts().mean(axis=0))
report = estimate_compatibility(acc.normalized, env.truth.support, 100_000,
                                np.random.default_rng(0))
print(f"estimated compatibility constant: {report.phi_hat:.3f} "
      f"(upper estimate from {report.samples_used} cone samples)")
