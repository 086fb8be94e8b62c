"""Comparison policies.

* the inverse-propensity-weighted pseudo-reward, as a drop-in estimator for
  :class:`drlasso.policy.DRLassoBandit`;
* the forced-sampling Lasso bandit with per-arm estimators, adapted to a
  shared parameter by stacking all arms' contexts into one ``N*d`` vector;
* uniform, greedy and oracle controls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from .lasso import LassoProblem, fit_lasso
from .policy import (
    ArmDecision,
    DrPolicyConfig,
    PolicyState,
    greedy_arm,
    pseudo_reward,
    update_estimate,
)


def ipw_pseudo_reward(contexts: np.ndarray, decision: ArmDecision, observed_reward: float) -> float:
    """``r / (N * propensity)``, unbiased for ``b_bar^T beta``; never truncated."""
    if not decision.propensity > 0:
        raise ValueError(f"propensity must be positive, got {decision.propensity}")
    return float(observed_reward / (contexts.shape[0] * decision.propensity))


def ipw_estimate(contexts, decision, observed_reward, beta_prev) -> float:
    # Estimator-plug signature used by DRLassoBandit; beta_prev is unused.
    return ipw_pseudo_reward(contexts, decision, observed_reward)


def embed_block_context(contexts: np.ndarray) -> np.ndarray:
    """Row-major concatenation ``[b_1, ..., b_N]`` of shape ``(N*d,)``."""
    return np.ascontiguousarray(contexts, dtype=float).reshape(-1)


def block_parameter(beta: np.ndarray, arm: int, n_arms: int) -> np.ndarray:
    """The ``N*d`` parameter of ``arm``: ``beta`` in its own block, zeros elsewhere."""
    d = beta.shape[0]
    out = np.zeros(n_arms * d)
    out[arm * d:(arm + 1) * d] = beta
    return out


# --------------------------------------------------------------------------
# Lasso bandit


@dataclass(frozen=True)
class LassoBanditConfig:
    """Forced-sampling Lasso bandit parameters.

    q : int
        Forced pulls per arm per block of the schedule.
    h : float
        Width of the candidate band around the forced-sample maximum.
    lambda_forced : float
        Fixed penalty of the forced-sample estimators.
    lambda_all : float
        Initial penalty of the all-sample estimators, decayed as
        ``lambda_all * sqrt((ln t + ln(N d)) / t)``.
    """

    q: int = 1
    h: float = 1.0
    lambda_forced: float = 2.0
    lambda_all: float = 2.0

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise ValueError(f"q must be a positive integer, got {self.q}")
        for name in ("h", "lambda_forced", "lambda_all"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


def forced_arm(t: int, n_arms: int, q: int):
    """Arm force-pulled at round ``t`` (1-based), or ``None``.

    Arm ``i`` (0-based) is forced at rounds ``(2^n - 1) N q + j`` for
    ``n = 0, 1, ...`` and ``j = q i + 1, ..., q (i + 1)``.
    """
    block = n_arms * q
    n = 0
    while True:
        start = (2**n - 1) * block
        if t <= start:
            return None
        if t <= start + block:
            return (t - start - 1) // q
        n += 1


def forced_schedule(n_arms: int, q: int, horizon: int) -> Dict[int, List[int]]:
    schedule: Dict[int, List[int]] = {i: [] for i in range(n_arms)}
    for t in range(1, horizon + 1):
        arm = forced_arm(t, n_arms, q)
        if arm is not None:
            schedule[arm].append(t)
    return schedule


@dataclass
class _ArmStore:
    rows: List[np.ndarray] = field(default_factory=list)
    targets: List[float] = field(default_factory=list)

    def add(self, x, y):
        self.rows.append(x)
        self.targets.append(float(y))

    def __len__(self):
        return len(self.targets)


@dataclass
class LassoBanditState:
    n_arms: int
    dim: int
    config: LassoBanditConfig
    forced: List[_ArmStore] = field(default_factory=list)
    all_samples: List[_ArmStore] = field(default_factory=list)
    beta_forced: np.ndarray = None
    beta_all: np.ndarray = None

    @classmethod
    def initial(cls, n_arms: int, dim: int, config: LassoBanditConfig) -> "LassoBanditState":
        width = n_arms * dim
        return cls(
            n_arms, dim, config,
            forced=[_ArmStore() for _ in range(n_arms)],
            all_samples=[_ArmStore() for _ in range(n_arms)],
            beta_forced=np.zeros((n_arms, width)),
            beta_all=np.zeros((n_arms, width)),
        )


def _refit(store: _ArmStore, penalty: float, warm: np.ndarray) -> np.ndarray:
    problem = LassoProblem(np.vstack(store.rows), np.array(store.targets), penalty)
    return fit_lasso(problem, warm_start=warm).beta_hat


def lasso_bandit_select(state: LassoBanditState, contexts: np.ndarray, t: int) -> ArmDecision:
    arm = forced_arm(t, state.n_arms, state.config.q)
    if arm is not None:
        return ArmDecision(arm, 1.0, True)
    x = embed_block_context(contexts)
    forced_scores = state.beta_forced @ x
    candidates = np.flatnonzero(forced_scores >= forced_scores.max() - state.config.h / 2)
    all_scores = state.beta_all[candidates] @ x
    return ArmDecision(int(candidates[np.argmax(all_scores)]), 1.0, False)


def lasso_bandit_update(state: LassoBanditState, contexts: np.ndarray,
                        decision: ArmDecision, reward: float, t: int) -> LassoBanditState:
    x = embed_block_context(contexts)
    i = decision.arm
    if decision.explored:
        state.forced[i].add(x, reward)
        state.beta_forced[i] = _refit(state.forced[i], state.config.lambda_forced,
                                      state.beta_forced[i])
    state.all_samples[i].add(x, reward)
    width = x.shape[0]
    penalty = state.config.lambda_all * math.sqrt((math.log(t) + math.log(width)) / t)
    state.beta_all[i] = _refit(state.all_samples[i], penalty, state.beta_all[i])
    return state


def lasso_bandit_step(state: LassoBanditState, contexts: np.ndarray, t: int,
                      reward_of: Callable[[int], float]) -> Tuple[int, LassoBanditState]:
    """Select an arm, observe its reward through ``reward_of`` and update."""
    decision = lasso_bandit_select(state, contexts, t)
    lasso_bandit_update(state, contexts, decision, reward_of(decision.arm), t)
    return decision.arm, state


class LassoBandit:
    name = "lasso_bandit"

    def __init__(self, n_arms: int, dim: int, config: LassoBanditConfig):
        self.config = config
        self.state = LassoBanditState.initial(n_arms, dim, config)

    def select(self, contexts, t):
        return lasso_bandit_select(self.state, contexts, t)

    def update(self, contexts, decision, reward, t):
        lasso_bandit_update(self.state, contexts, decision, reward, t)


# --------------------------------------------------------------------------
# Controls


def baseline_select(kind: str, contexts: np.ndarray, beta_ref, rng: np.random.Generator) -> ArmDecision:
    """Uniform, greedy (against an estimate) or oracle (against the truth)."""
    n_arms = contexts.shape[0]
    if kind == "uniform":
        return ArmDecision(int(rng.integers(n_arms)), 1.0 / n_arms, True)
    if kind in ("greedy", "oracle"):
        return ArmDecision(greedy_arm(contexts, np.asarray(beta_ref)), 1.0, False)
    raise ValueError(f"unknown baseline kind {kind!r}")


class UniformPolicy:
    name = "uniform"

    def __init__(self, rng):
        self.rng = rng

    def select(self, contexts, t):
        return baseline_select("uniform", contexts, None, self.rng)

    def update(self, contexts, decision, reward, t):
        pass


class OraclePolicy:
    name = "oracle"

    def __init__(self, beta):
        self.beta = np.asarray(beta)

    def select(self, contexts, t):
        return baseline_select("oracle", contexts, self.beta, None)

    def update(self, contexts, decision, reward, t):
        pass


class GreedyPolicy:
    """Greedy play against a lasso estimate refitted on DR pseudo-rewards.

    With propensity 1 every round this is the DR policy with no exploration
    and no uniform phase.
    """

    name = "greedy"

    def __init__(self, dim: int, lambda2: float = 1.0, truncation_bound: float = 10.0):
        self.dim = dim
        self.config = DrPolicyConfig(lambda1=0.0, lambda2=lambda2, zt=0,
                                     truncation_bound=truncation_bound)
        self.state = PolicyState.initial(dim)

    @property
    def beta_hat(self):
        return self.state.beta_hat

    def select(self, contexts, t):
        return baseline_select("greedy", contexts, self.state.beta_hat, None)

    def update(self, contexts, decision, reward, t):
        sample = pseudo_reward(contexts, decision, reward, self.state.beta_hat, self.config)
        update_estimate(self.state, sample, t, self.dim, self.config)
