"""Doubly-robust Lasso bandit.

Each round the policy either plays uniformly (the first ``zt`` rounds, and
afterwards with probability ``lambda1_t``) or greedily against its current
estimate. It then turns the single observed reward into a pseudo-reward for
the *average* context,

.. math::

    \\hat r(t) = \\bar b(t)^T \\hat\\beta(t-1)
        + \\frac{1}{N} \\frac{r_{a(t)}(t) - b_{a(t)}(t)^T \\hat\\beta(t-1)}{\\pi_{a(t)}(t)},

and refits the lasso on all ``(b_bar, r_hat)`` pairs seen so far.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .lasso import fit_lasso_moments

STATE_FORMAT = "drlasso.PolicyState"
STATE_VERSION = 1


@dataclass(frozen=True)
class DrPolicyConfig:
    """Tuning parameters of the DR Lasso bandit.

    ``lambda1`` scales the exploration probability, ``lambda2`` the lasso
    penalty, ``zt`` is the length of the initial uniform phase and
    ``truncation_bound`` clamps stored pseudo-rewards to ``[-M, M]``.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    zt: int = 20
    truncation_bound: float = 10.0
    refit_every: int = 1

    def __post_init__(self):
        # lambda1 = 0 is allowed: it turns the policy into pure greedy.
        if not self.lambda1 >= 0:
            raise ValueError(f"lambda1 must be nonnegative, got {self.lambda1}")
        if not self.lambda2 > 0:
            raise ValueError(f"lambda2 must be positive, got {self.lambda2}")
        if int(self.zt) != self.zt or self.zt < 0:
            raise ValueError(f"zt must be a nonnegative integer, got {self.zt}")
        if not self.truncation_bound > 0:
            raise ValueError(f"truncation_bound must be positive, got {self.truncation_bound}")
        if int(self.refit_every) != self.refit_every or self.refit_every < 1:
            raise ValueError(f"refit_every must be a positive integer, got {self.refit_every}")


@dataclass(frozen=True)
class ArmDecision:
    arm: int
    propensity: float
    explored: bool

    def __post_init__(self):
        if not self.propensity > 0:
            raise ValueError(f"propensity must be positive, got {self.propensity}")


@dataclass(frozen=True)
class PseudoSample:
    avg_context: np.ndarray
    pseudo_reward: float
    raw_reward: float


@dataclass
class PolicyState:
    beta_hat: np.ndarray
    store: List[PseudoSample] = field(default_factory=list)
    round: int = 0
    sum_outer: Optional[np.ndarray] = field(default=None, repr=False)
    sum_xy: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        d = self.beta_hat.shape[0]
        if self.sum_outer is None:
            self.sum_outer = np.zeros((d, d))
        if self.sum_xy is None:
            self.sum_xy = np.zeros(d)

    @classmethod
    def initial(cls, d: int) -> "PolicyState":
        return cls(beta_hat=np.zeros(d))

    @property
    def dim(self) -> int:
        return self.beta_hat.shape[0]

    def to_json(self) -> str:
        """Serialize to a versioned JSON document; floats round-trip exactly."""
        doc = {
            "format": STATE_FORMAT,
            "version": STATE_VERSION,
            "dim": self.dim,
            "round": self.round,
            "beta_hat": self.beta_hat.tolist(),
            "avg_contexts": [s.avg_context.tolist() for s in self.store],
            "pseudo_rewards": [s.pseudo_reward for s in self.store],
            "raw_rewards": [s.raw_reward for s in self.store],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "PolicyState":
        doc = json.loads(text)
        if doc.get("format") != STATE_FORMAT:
            raise ValueError(f"not a policy state document: format={doc.get('format')!r}")
        if doc.get("version") != STATE_VERSION:
            raise ValueError(f"unsupported policy state version {doc.get('version')!r}")
        d = int(doc["dim"])
        beta = np.array(doc["beta_hat"], dtype=float)
        if beta.shape != (d,):
            raise ValueError("beta_hat length does not match dim")
        state = cls(beta_hat=beta)
        for x, r, raw in zip(doc["avg_contexts"], doc["pseudo_rewards"], doc["raw_rewards"]):
            _append(state, PseudoSample(np.array(x, dtype=float), float(r), float(raw)))
        state.round = int(doc["round"])
        if len(state.store) != state.round:
            raise ValueError("store length does not match round")
        return state


def _rate(t: int, d: int) -> float:
    return math.sqrt((math.log(t) + math.log(d)) / t)


def schedule_rates(t: int, d: int, config: DrPolicyConfig) -> Tuple[float, float]:
    """Return ``(min(1, lambda1_t), lambda2_t)`` at round ``t``.

    Both follow ``lambda * sqrt((ln t + ln d) / t)``; only the exploration
    rate is clamped, since it is used as a probability.
    """
    if t < 1:
        raise ValueError(f"rounds are numbered from 1, got t={t}")
    if d < 1:
        raise ValueError(f"dimension must be positive, got d={d}")
    base = _rate(t, d)
    return min(1.0, config.lambda1 * base), config.lambda2 * base


def greedy_arm(contexts: np.ndarray, beta_hat: np.ndarray) -> int:
    return int(np.argmax(contexts @ beta_hat))


def select_arm(
    state: PolicyState,
    contexts: np.ndarray,
    config: DrPolicyConfig,
    rng: np.random.Generator,
) -> ArmDecision:
    n_arms = contexts.shape[0]
    if n_arms == 0:
        raise ValueError("empty context set")
    t = state.round + 1
    if t <= config.zt:
        return ArmDecision(int(rng.integers(n_arms)), 1.0 / n_arms, True)
    rate, _ = schedule_rates(t, contexts.shape[1], config)
    target = greedy_arm(contexts, state.beta_hat)
    explore = bool(rng.random() < rate)
    arm = int(rng.integers(n_arms)) if explore else target
    propensity = rate / n_arms + (1.0 - rate) * (arm == target)
    return ArmDecision(arm, propensity, explore)


def dr_estimate(
    contexts: np.ndarray, decision: ArmDecision, observed_reward: float, beta_prev: np.ndarray
) -> float:
    """Untruncated doubly-robust pseudo-reward for the average context."""
    if not decision.propensity > 0:
        raise ValueError(f"propensity must be positive, got {decision.propensity}")
    n_arms = contexts.shape[0]
    avg = contexts.mean(axis=0)
    residual = observed_reward - contexts[decision.arm] @ beta_prev
    return float(avg @ beta_prev + residual / (n_arms * decision.propensity))


Estimator = Callable[[np.ndarray, ArmDecision, float, np.ndarray], float]


def pseudo_reward(
    contexts: np.ndarray,
    decision: ArmDecision,
    observed_reward: float,
    beta_prev: np.ndarray,
    config: DrPolicyConfig,
    estimator: Estimator = dr_estimate,
) -> PseudoSample:
    raw = estimator(contexts, decision, observed_reward, beta_prev)
    bound = config.truncation_bound
    return PseudoSample(contexts.mean(axis=0), float(np.clip(raw, -bound, bound)), raw)


def _append(state: PolicyState, sample: PseudoSample) -> None:
    x = sample.avg_context
    state.store.append(sample)
    state.sum_outer += np.outer(x, x)
    state.sum_xy += sample.pseudo_reward * x
    state.round += 1


def update_estimate(
    state: PolicyState, sample: PseudoSample, t: int, d: int, config: DrPolicyConfig
) -> PolicyState:
    """Add one pseudo-sample and refit the lasso (in place; returns ``state``).

    The refit uses penalty ``lambda2_t`` and is warm-started from the previous
    estimate. With ``refit_every > 1`` the estimate is carried forward on
    rounds not divisible by it.
    """
    if sample.avg_context.shape != (d,):
        raise ValueError(f"avg_context has shape {sample.avg_context.shape}, expected ({d},)")
    if t != state.round + 1:
        raise ValueError(f"expected round {state.round + 1}, got {t}")
    _append(state, sample)
    if t % config.refit_every == 0:
        _, penalty = schedule_rates(t, d, config)
        solution = fit_lasso_moments(
            state.sum_outer / t, state.sum_xy / t, penalty, warm_start=state.beta_hat,
            n_samples=t,
        )
        state.beta_hat = solution.beta_hat
    return state


def default_zt(d: int, T: int, s0: int, phi1: float, delta_prime: float) -> int:
    """Uniform-phase length that makes the average-context Gram matrix compatible.

    Uses ``c = min(0.5, phi1^2 / (256 s0))`` and returns
    ``ceil(max(3 ln(d) / c^2, ln(T^2 / delta') / c^2))``.
    """
    if not 0 < delta_prime < 1:
        raise ValueError("delta_prime must lie in (0, 1)")
    c = compatibility_rate(phi1, s0)
    return math.ceil(max(3.0 * math.log(d) / c**2, math.log(T**2 / delta_prime) / c**2))


def compatibility_rate(phi1: float, s0: int) -> float:
    return min(0.5, phi1**2 / (256.0 * s0))


class DRLassoBandit:
    """Stateful wrapper driving :func:`select_arm` and :func:`update_estimate`.

    Parameters
    ----------
    dim : int
        Context dimension ``d``.
    config : DrPolicyConfig
    rng : numpy.random.Generator
        Source of the exploration coin and uniform picks.
    estimator : callable, optional
        Raw pseudo-reward rule. Defaults to the doubly-robust one; pass
        :func:`drlasso.baselines.ipw_estimate` for the IPW variant.
    """

    name = "dr"

    def __init__(self, dim: int, config: DrPolicyConfig, rng: np.random.Generator,
                 estimator: Estimator = dr_estimate, name: Optional[str] = None):
        self.dim = dim
        self.config = config
        self.rng = rng
        self.estimator = estimator
        self.state = PolicyState.initial(dim)
        self.last_sample: Optional[PseudoSample] = None
        if name is not None:
            self.name = name

    @property
    def beta_hat(self) -> np.ndarray:
        return self.state.beta_hat

    def select(self, contexts: np.ndarray, t: int) -> ArmDecision:
        return select_arm(self.state, contexts, self.config, self.rng)

    def update(self, contexts: np.ndarray, decision: ArmDecision, reward: float, t: int) -> None:
        sample = pseudo_reward(contexts, decision, reward, self.state.beta_hat,
                               self.config, self.estimator)
        update_estimate(self.state, sample, t, self.dim, self.config)
        self.last_sample = sample
