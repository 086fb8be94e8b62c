"""Doubly-robust Lasso bandit for high-dimensional contexts, with baselines,
diagnostics and a seeded simulation harness."""
from .baselines import (
    GreedyPolicy,
    LassoBandit,
    LassoBanditConfig,
    OraclePolicy,
    UniformPolicy,
    block_parameter,
    embed_block_context,
    forced_arm,
    forced_schedule,
    ipw_estimate,
    ipw_pseudo_reward,
)
from .diagnostics import (
    CompatibilityReport,
    GramAccumulator,
    VarianceTracker,
    accumulate_gram,
    estimate_compatibility,
    hoeffding_margin,
    l1_bound,
    l1_error_and_bound,
    track_variance,
)
from .environment import EnvironmentConfig, SparseLinearBandit, make_streams
from .harness import (
    ConfigError,
    ExperimentConfig,
    aggregate_quantiles,
    load_config,
    run_experiment,
    run_replication,
)
from .lasso import (
    LassoConvergenceError,
    LassoProblem,
    LassoSolution,
    RegressionSample,
    fit_lasso,
    fit_lasso_moments,
    kkt_residual,
    lasso_objective,
    soft_threshold,
)
from .policy import (
    ArmDecision,
    DRLassoBandit,
    DrPolicyConfig,
    PolicyState,
    default_zt,
    dr_estimate,
    pseudo_reward,
    schedule_rates,
    select_arm,
    update_estimate,
)

__version__ = "0.1.0"
