"""Seeded replications, regret accounting and CSV output."""
from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .baselines import (
    GreedyPolicy,
    LassoBandit,
    LassoBanditConfig,
    OraclePolicy,
    UniformPolicy,
    ipw_estimate,
)
from .diagnostics import (
    GramAccumulator,
    VarianceTracker,
    accumulate_gram,
    checkpoints_for,
    hoeffding_margin,
    l1_error_and_bound,
    track_variance,
)
from .environment import EnvironmentConfig, SparseLinearBandit, make_streams
from .lasso import LassoConvergenceError
from .policy import DRLassoBandit, DrPolicyConfig, dr_estimate, schedule_rates

POLICIES = ("dr", "dr_ipw", "lasso_bandit", "uniform", "greedy", "oracle")

_POLICY_PARAMS = {
    "dr": DrPolicyConfig,
    "dr_ipw": DrPolicyConfig,
    "lasso_bandit": LassoBanditConfig,
    "greedy": None,
    "uniform": None,
    "oracle": None,
}
_GREEDY_PARAMS = ("lambda2", "truncation_bound")

RECORD_COLUMNS = ("replication", "t", "policy", "arm", "propensity", "explored",
                  "reward", "regret", "cum_regret")
DIAGNOSTIC_COLUMNS = ("record_type", "replication", "t", "policy", "name", "value", "note")
CURVE_COLUMNS = ("t", "q1", "median", "q3")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` is the dotted path at fault."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class PolicySpec:
    name: str = "dr"
    params: Mapping[str, Any] = field(default_factory=dict)

    def build_config(self):
        if self.name in ("dr", "dr_ipw"):
            return DrPolicyConfig(**self.params)
        if self.name == "lasso_bandit":
            return LassoBanditConfig(**self.params)
        return dict(self.params)


@dataclass(frozen=True)
class DiagnosticsConfig:
    phi1: float = 1.0
    r_tilde: float = 1.0
    delta: float = 0.1
    delta_prime: float = 0.01
    exploration_delta: float = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    policy: PolicySpec = field(default_factory=PolicySpec)
    horizon: int = 1000
    replications: int = 10
    master_seed: int = 0
    checkpoints: Optional[tuple] = None
    output_path: str = "results"
    fix_beta: bool = False
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)

    @property
    def checkpoint_list(self) -> List[int]:
        if self.checkpoints is None:
            return checkpoints_for(self.horizon)
        return sorted(set(self.checkpoints))

    def to_dict(self) -> dict:
        env = asdict(self.environment)
        env.pop("seed")
        return {
            "environment": env,
            "policy": {"name": self.policy.name, **dict(self.policy.params)},
            "horizon": self.horizon,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "checkpoints": None if self.checkpoints is None else list(self.checkpoints),
            "output_path": self.output_path,
            "fix_beta": self.fix_beta,
            "diagnostics": asdict(self.diagnostics),
        }


def _check_keys(section: Mapping, allowed: Iterable[str], prefix: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _positive_int(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ConfigError(key, f"must be a positive integer, got {value!r}")
    return int(value)


_ENV_FIELD_ERRORS = {
    # Map a validation message fragment to the field it blames.
    "n_arms": "n_arms", "dim": "dim", "sparsity": "sparsity",
    "cross_arm_correlation": "cross_arm_correlation", "noise_sd": "noise_sd",
}


def load_config(doc: Optional[Mapping] = None) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from a nested mapping.

    Missing fields take their defaults (``d=100``, ``s0=5``, ``sigma=0.05``,
    10 replications). Unknown keys and out-of-range values raise
    :class:`ConfigError` carrying the dotted key path.
    """
    doc = dict(doc or {})
    top = {f.name for f in fields(ExperimentConfig)}
    _check_keys(doc, top, "")

    env_doc = dict(doc.get("environment") or {})
    env_fields = {f.name for f in fields(EnvironmentConfig)} - {"seed"}
    _check_keys(env_doc, env_fields, "environment.")
    master_seed = doc.get("master_seed", 0)
    if isinstance(master_seed, bool) or not isinstance(master_seed, (int, np.integer)) or master_seed < 0:
        raise ConfigError("master_seed", f"must be a nonnegative integer, got {master_seed!r}")
    try:
        environment = EnvironmentConfig(seed=int(master_seed), **env_doc)
    except (TypeError, ValueError) as exc:
        blamed = next((k for k in _ENV_FIELD_ERRORS if str(exc).startswith(k)), "")
        raise ConfigError(f"environment.{blamed}".rstrip("."), str(exc)) from None

    pol_doc = dict(doc.get("policy") or {})
    name = pol_doc.pop("name", "dr")
    if name not in POLICIES:
        raise ConfigError("policy.name", f"must be one of {POLICIES}, got {name!r}")
    kind = _POLICY_PARAMS[name]
    if kind is not None:
        allowed = {f.name for f in fields(kind)}
    elif name == "greedy":
        allowed = set(_GREEDY_PARAMS)
    else:
        allowed = set()
    _check_keys(pol_doc, allowed, "policy.")
    policy = PolicySpec(name, pol_doc)
    try:
        policy.build_config()
    except (TypeError, ValueError) as exc:
        blamed = next((k for k in sorted(allowed, key=len, reverse=True)
                       if str(exc).startswith(k)), "")
        raise ConfigError(f"policy.{blamed}".rstrip("."), str(exc)) from None

    horizon = _positive_int(doc.get("horizon", 1000), "horizon")
    replications = _positive_int(doc.get("replications", 10), "replications")
    checkpoints = doc.get("checkpoints")
    if checkpoints is not None:
        checkpoints = tuple(int(c) for c in checkpoints)
        for c in checkpoints:
            if not 1 <= c <= horizon:
                raise ConfigError("checkpoints", f"{c} is outside [1, {horizon}]")

    diag_doc = dict(doc.get("diagnostics") or {})
    _check_keys(diag_doc, {f.name for f in fields(DiagnosticsConfig)}, "diagnostics.")
    diagnostics = DiagnosticsConfig(**diag_doc)
    if not 0 < diagnostics.delta_prime < diagnostics.delta < 1:
        raise ConfigError("diagnostics.delta", "need 0 < delta_prime < delta < 1")

    output_path = doc.get("output_path", "results")
    if not isinstance(output_path, str):
        raise ConfigError("output_path", "must be a string")
    return ExperimentConfig(
        environment=environment,
        policy=policy,
        horizon=horizon,
        replications=replications,
        master_seed=int(master_seed),
        checkpoints=checkpoints,
        output_path=output_path,
        fix_beta=bool(doc.get("fix_beta", False)),
        diagnostics=diagnostics,
    )


def load_config_file(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return load_config(json.load(fh))


# --------------------------------------------------------------------------
# Replications


@dataclass(frozen=True)
class RoundRecord:
    replication: int
    t: int
    policy: str
    arm: int
    propensity: float
    explored: bool
    reward: float
    regret: float
    cum_regret: float


@dataclass(frozen=True)
class DiagnosticRecord:
    record_type: str
    replication: int
    t: int
    policy: str
    name: str
    value: float
    note: str = ""


@dataclass
class ReplicationResult:
    replication: int
    records: List[RoundRecord]
    diagnostics: List[DiagnosticRecord]
    beta: np.ndarray
    failed: bool = False


def make_policy(spec: PolicySpec, env: SparseLinearBandit, rng: np.random.Generator):
    cfg = spec.build_config()
    d, n = env.config.dim, env.config.n_arms
    if spec.name == "dr":
        return DRLassoBandit(d, cfg, rng, dr_estimate, name="dr")
    if spec.name == "dr_ipw":
        return DRLassoBandit(d, cfg, rng, ipw_estimate, name="dr_ipw")
    if spec.name == "lasso_bandit":
        return LassoBandit(n, d, cfg)
    if spec.name == "greedy":
        return GreedyPolicy(d, **cfg)
    if spec.name == "uniform":
        return UniformPolicy(rng)
    if spec.name == "oracle":
        return OraclePolicy(env.beta)
    raise ValueError(f"unknown policy {spec.name!r}")


def build_environment(config: ExperimentConfig, replication_index: int) -> SparseLinearBandit:
    streams = make_streams(config.master_seed, replication_index, config.fix_beta)
    env_cfg = replace(config.environment, seed=config.master_seed)
    return SparseLinearBandit(env_cfg, streams)


def run_replication(config: ExperimentConfig, replication_index: int) -> ReplicationResult:
    """Play one seeded replication and return its per-round records.

    Every random draw is derived from ``(master_seed, replication_index)``,
    so repeated calls give identical results. The policy sees the contexts
    and only the chosen arm's realized reward; regret is computed from the
    expected rewards under the true parameter.
    """
    env = build_environment(config, replication_index)
    policy = make_policy(config.policy, env, env.streams["policy"])
    name = config.policy.name
    d = env.config.dim
    checkpoints = set(config.checkpoint_list)
    is_dr = isinstance(policy, DRLassoBandit)
    diag_cfg = config.diagnostics

    records: List[RoundRecord] = []
    diagnostics: List[DiagnosticRecord] = []
    gram = GramAccumulator.zeros(d) if is_dr else None
    sq_norms = 0.0
    spread = VarianceTracker()
    explored_after, rate_sum = 0, 0.0
    cum = 0.0

    def diag(t, key, value, note=""):
        diagnostics.append(DiagnosticRecord("diagnostic", replication_index, t, name, key,
                                            float(value), note))

    for t in range(1, config.horizon + 1):
        contexts = env.contexts()
        rewards = env.rewards(contexts)
        try:
            decision = policy.select(contexts, t)
            observed = float(rewards[decision.arm])
            policy.update(contexts, decision, observed, t)
        except LassoConvergenceError as exc:
            diagnostics.append(DiagnosticRecord("failure", replication_index, t, name,
                                                "lasso_kkt_residual", exc.residual, str(exc)))
            return ReplicationResult(replication_index, records, diagnostics, env.beta, True)
        regret = env.regret(contexts, decision.arm)
        cum += regret
        records.append(RoundRecord(replication_index, t, name, decision.arm,
                                   decision.propensity, decision.explored, observed,
                                   regret, cum))

        if is_dr:
            avg = policy.last_sample.avg_context
            accumulate_gram(gram, avg)
            sq_norms += float(avg @ avg)
            track_variance(spread, policy.last_sample.pseudo_reward)
            if t > policy.config.zt:
                explored_after += decision.explored
                rate_sum += schedule_rates(t, d, policy.config)[0]

        if t in checkpoints:
            beta_hat = getattr(policy, "beta_hat", None)
            if beta_hat is not None:
                error, bound = l1_error_and_bound(
                    beta_hat, env.beta, t, env.config.sparsity, d, diag_cfg.phi1,
                    diag_cfg.r_tilde, diag_cfg.delta, diag_cfg.delta_prime)
                diag(t, "l1_error", error)
                diag(t, "l1_bound", bound)
            if is_dr:
                diag(t, "gram_trace", np.trace(gram.normalized))
                diag(t, "mean_sq_norm", sq_norms / t)
                diag(t, "pseudo_reward_std", spread.std)
                diag(t, "exploration_count", explored_after)
                diag(t, "exploration_rate_sum", rate_sum)
                diag(t, "exploration_margin",
                     hoeffding_margin(t, diag_cfg.exploration_delta))
    return ReplicationResult(replication_index, records, diagnostics, env.beta)


def _run_one(args):
    config, index = args
    return run_replication(config, index)


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> List[ReplicationResult]:
    """All replications, ordered by replication index."""
    jobs = [(config, i) for i in range(config.replications)]
    if n_jobs == 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        results = list(pool.map(_run_one, jobs))
    return sorted(results, key=lambda r: r.replication)


@dataclass
class PseudoRewardTrace:
    t: np.ndarray
    explored: np.ndarray
    dr: np.ndarray
    ipw: np.ndarray


def trace_pseudo_rewards(config: ExperimentConfig, replication_index: int) -> PseudoRewardTrace:
    """Raw DR and IPW pseudo-rewards computed on the same arm-selection stream.

    The policy is driven by its configured estimator; the other estimator
    is evaluated alongside on identical decisions and observed rewards.
    """
    if config.policy.name not in ("dr", "dr_ipw"):
        raise ValueError("pseudo-reward traces need a dr or dr_ipw policy")
    env = build_environment(config, replication_index)
    policy = make_policy(config.policy, env, env.streams["policy"])
    T = config.horizon
    explored = np.zeros(T, dtype=bool)
    dr, ipw = np.zeros(T), np.zeros(T)
    for t in range(1, T + 1):
        contexts = env.contexts()
        rewards = env.rewards(contexts)
        decision = policy.select(contexts, t)
        observed = float(rewards[decision.arm])
        beta_prev = policy.beta_hat.copy()
        dr[t - 1] = dr_estimate(contexts, decision, observed, beta_prev)
        ipw[t - 1] = ipw_estimate(contexts, decision, observed, beta_prev)
        explored[t - 1] = decision.explored
        policy.update(contexts, decision, observed, t)
    return PseudoRewardTrace(np.arange(1, T + 1), explored, dr, ipw)


# --------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class QuantileCurve:
    t: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray


def _group(records) -> List[List[RoundRecord]]:
    records = list(records)
    if records and isinstance(records[0], ReplicationResult):
        return [r.records for r in records]
    if records and isinstance(records[0], RoundRecord):
        by_rep: Dict[int, List[RoundRecord]] = {}
        for rec in records:
            by_rep.setdefault(rec.replication, []).append(rec)
        return [by_rep[k] for k in sorted(by_rep)]
    return [list(r) for r in records]


def cumulative_regret_matrix(records) -> np.ndarray:
    """Shape ``(replications, T)`` array of cumulative regret."""
    groups = _group(records)
    if not groups:
        raise ValueError("need at least one replication")
    horizons = {len(g) for g in groups}
    if len(horizons) != 1:
        raise ValueError(f"replications have mismatched horizons {sorted(horizons)}")
    return np.array([[r.cum_regret for r in g] for g in groups])


def aggregate_quantiles(records, checkpoints: Optional[Sequence[int]] = None) -> QuantileCurve:
    """Median and quartiles of cumulative regret across replications.

    Quantiles use linear interpolation between order statistics. Without
    ``checkpoints`` every round is reported.
    """
    cum = cumulative_regret_matrix(records)
    T = cum.shape[1]
    ts = np.arange(1, T + 1) if checkpoints is None else np.array(sorted(checkpoints))
    if ts.min() < 1 or ts.max() > T:
        raise ValueError(f"checkpoints must lie in [1, {T}]")
    cols = cum[:, ts - 1]
    q1, med, q3 = np.quantile(cols, [0.25, 0.5, 0.75], axis=0, method="linear")
    return QuantileCurve(ts, q1, med, q3)


def exploration_check(result: ReplicationResult, config: ExperimentConfig,
                      delta: float = 0.05):
    """``(count, rate_sum, margin)`` for exploration rounds after the uniform phase."""
    cfg = config.policy.build_config()
    d = config.environment.dim
    count, rate_sum = 0, 0.0
    for rec in result.records:
        if rec.t > cfg.zt:
            count += rec.explored
            rate_sum += schedule_rates(rec.t, d, cfg)[0]
    return count, rate_sum, hoeffding_margin(config.horizon, delta)


# --------------------------------------------------------------------------
# Output


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def _write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence]):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def write_records(records: Iterable[RoundRecord], path: str) -> None:
    _write_rows(path, RECORD_COLUMNS,
                ([getattr(r, c) for c in RECORD_COLUMNS] for r in records))


def read_records(path: str) -> List[RoundRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            RoundRecord(int(row["replication"]), int(row["t"]), row["policy"], int(row["arm"]),
                        float(row["propensity"]), row["explored"] == "1", float(row["reward"]),
                        float(row["regret"]), float(row["cum_regret"]))
            for row in reader
        ]


def write_curve(curve: QuantileCurve, path: str) -> None:
    _write_rows(path, CURVE_COLUMNS,
                zip((int(t) for t in curve.t), curve.q1, curve.median, curve.q3))


def write_diagnostics(diagnostics: Iterable[DiagnosticRecord], path: str) -> None:
    _write_rows(path, DIAGNOSTIC_COLUMNS,
                ([getattr(r, c) for c in DIAGNOSTIC_COLUMNS] for r in diagnostics))


def setting_label(config: ExperimentConfig) -> str:
    env = config.environment
    label = (f"{config.policy.name}_N{env.n_arms}_d{env.dim}_s{env.sparsity}"
             f"_rho{env.cross_arm_correlation:g}_T{config.horizon}")
    for key in sorted(config.policy.params):
        label += f"_{key}{config.policy.params[key]:g}"
    return label


SUMMARY_COLUMNS = ("setting", "policy", "n_arms", "dim", "sparsity", "rho2", "noise_sd",
                   "horizon", "replications", "params", "q1", "median", "q3", "failed")


def write_outputs(config: ExperimentConfig, results: List[ReplicationResult],
                  out_dir: Optional[str] = None) -> dict:
    """Write records, quantiles and diagnostics for one setting.

    Returns the summary row for the setting (final cumulative-regret
    quartiles), which callers collect into ``summary.csv``.
    """
    out_dir = out_dir or config.output_path
    os.makedirs(out_dir, exist_ok=True)
    label = setting_label(config)
    write_records(itertools.chain.from_iterable(r.records for r in results),
                  os.path.join(out_dir, f"{label}.csv"))
    write_diagnostics(itertools.chain.from_iterable(r.diagnostics for r in results),
                      os.path.join(out_dir, f"{label}_diagnostics.csv"))
    complete = [r for r in results if not r.failed]
    row = {
        "setting": label, "policy": config.policy.name,
        "n_arms": config.environment.n_arms, "dim": config.environment.dim,
        "sparsity": config.environment.sparsity,
        "rho2": config.environment.cross_arm_correlation,
        "noise_sd": config.environment.noise_sd, "horizon": config.horizon,
        "replications": config.replications,
        "params": json.dumps(dict(config.policy.params), sort_keys=True),
        "q1": math.nan, "median": math.nan, "q3": math.nan,
        "failed": len(results) - len(complete),
    }
    if complete:
        curve = aggregate_quantiles(complete, config.checkpoint_list)
        write_curve(curve, os.path.join(out_dir, f"{label}_quantiles.csv"))
        row.update(q1=curve.q1[-1], median=curve.median[-1], q3=curve.q3[-1])
    return row


def write_summary(rows: Sequence[dict], path: str) -> None:
    _write_rows(path, SUMMARY_COLUMNS, ([row[c] for c in SUMMARY_COLUMNS] for row in rows))


def grid_search(config: ExperimentConfig, grid: Mapping[str, Sequence], n_jobs: int = 1):
    """Run every combination of policy parameters in ``grid``.

    Returns ``(best_params, table)`` where ``table`` lists
    ``(params, median final cumulative regret)`` and ``best_params``
    minimizes that median.
    """
    keys = sorted(grid)
    table = []
    for values in itertools.product(*(grid[k] for k in keys)):
        params = {**dict(config.policy.params), **dict(zip(keys, values))}
        cfg = replace(config, policy=PolicySpec(config.policy.name, params))
        results = run_experiment(cfg, n_jobs)
        complete = [r for r in results if not r.failed]
        final = (float(np.median([r.records[-1].cum_regret for r in complete]))
                 if len(complete) == len(results) else math.inf)
        table.append((params, final))
    best = min(table, key=lambda row: row[1])[0]
    return best, table
