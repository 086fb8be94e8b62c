"""Runtime checks on the statistical quantities behind the regret analysis.

None of these feed back into the policies. They measure what the theory
talks about: the Gram matrix of average contexts and its compatibility
constant, the L1 estimation error against its high-probability envelope,
how often the policy explored, and how dispersed the pseudo-rewards are.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


@dataclass
class GramAccumulator:
    sum_outer: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, d: int) -> "GramAccumulator":
        return cls(np.zeros((d, d)), 0)

    @property
    def normalized(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("no vectors accumulated yet")
        return self.sum_outer / self.count


def accumulate_gram(acc: GramAccumulator, avg_context: np.ndarray) -> GramAccumulator:
    x = np.asarray(avg_context, dtype=float)
    if x.shape != (acc.sum_outer.shape[0],):
        raise ValueError(f"vector has shape {x.shape}, expected ({acc.sum_outer.shape[0]},)")
    acc.sum_outer += np.outer(x, x)
    acc.count += 1
    return acc


@dataclass(frozen=True)
class CompatibilityReport:
    phi_hat: float
    samples_used: int
    support: Tuple[int, ...]
    direction: np.ndarray = field(repr=False)


def _cone_quadratic(M, V, n_support):
    return n_support * np.einsum("ij,jk,ik->i", V, M, V)


def _project_cone(V, support_mask, radius=3.0):
    # Rescale so ||v_I||_1 = 1, then shrink v_{I^c} onto the L1 ball of `radius`.
    V = V.copy()
    inside = np.abs(V[:, support_mask]).sum(axis=1, keepdims=True)
    inside[inside == 0] = 1.0
    V /= inside
    outside = np.abs(V[:, ~support_mask]).sum(axis=1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(outside, 1e-300))
    V[:, ~support_mask] *= scale
    return V


def estimate_compatibility(
    matrix: np.ndarray,
    support: Sequence[int],
    n_samples: int,
    rng: np.random.Generator,
    refine_steps: int = 3000,
    batch: int = 32,
) -> CompatibilityReport:
    """Randomized estimate of the compatibility constant of ``matrix``.

    Minimizes ``|I| v^T M v`` over the cone ``||v_{I^c}||_1 <= 3 ||v_I||_1``
    normalized to ``||v_I||_1 = 1``: first by sampling ``n_samples`` random
    cone directions, then by a perturbation descent started at the best one.
    The result is an upper estimate of the true constant, not a certificate.
    """
    M = np.asarray(matrix, dtype=float)
    d = M.shape[0]
    if M.shape != (d, d):
        raise ValueError("matrix must be square")
    support = tuple(sorted(int(i) for i in support))
    if len(support) == 0:
        raise ValueError("support must be nonempty")
    mask = np.zeros(d, dtype=bool)
    mask[list(support)] = True
    k, rest = mask.sum(), (~mask).sum()

    best_val, best_v = np.inf, None
    remaining = n_samples
    while remaining > 0:
        m = min(remaining, 20_000)
        V = np.zeros((m, d))
        V[:, mask] = rng.dirichlet(np.ones(k), size=m) * rng.choice([-1.0, 1.0], size=(m, k))
        if rest:
            radius = 3.0 * rng.uniform(size=(m, 1)) ** 2
            V[:, ~mask] = (rng.dirichlet(np.ones(rest), size=m)
                           * rng.choice([-1.0, 1.0], size=(m, rest)) * radius)
        vals = _cone_quadratic(M, V, k)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_v = float(vals[i]), V[i].copy()
        remaining -= m

    step = 0.1
    for _ in range(refine_steps):
        trial = _project_cone(best_v + step * rng.standard_normal((batch, d)), mask)
        vals = _cone_quadratic(M, trial, k)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_v = float(vals[i]), trial[i]
            step *= 1.5
        else:
            step *= 0.85
        if step < 1e-9:
            break
    return CompatibilityReport(math.sqrt(max(best_val, 0.0)), n_samples, support, best_v)


def l1_bound(t: int, s0: int, d: int, phi1: float = 1.0, r_tilde: float = 1.0,
             delta: float = 0.1, delta_prime: float = 0.01) -> float:
    """High-probability envelope ``d_t`` on the L1 error of the estimate at round ``t``."""
    if t < 1:
        raise ValueError("t must be at least 1")
    if not 0 < delta_prime < delta < 1:
        raise ValueError("need 0 < delta_prime < delta < 1")
    log_term = math.log(math.e * d * t**2 / (delta - delta_prime))
    return math.sqrt(128.0) / phi1**2 * s0 * r_tilde * math.sqrt(log_term / t)


def l1_error_and_bound(beta_hat, beta_true, t: int, s0: int, d: int, phi1: float = 1.0,
                       r_tilde: float = 1.0, delta: float = 0.1,
                       delta_prime: float = 0.01) -> Tuple[float, float]:
    error = float(np.abs(np.asarray(beta_hat) - np.asarray(beta_true)).sum())
    return error, l1_bound(t, s0, d, phi1, r_tilde, delta, delta_prime)


@dataclass
class ErrorTrace:
    t: List[int] = field(default_factory=list)
    l1_error: List[float] = field(default_factory=list)
    bound: List[float] = field(default_factory=list)

    def record(self, t, error, bound):
        self.t.append(int(t))
        self.l1_error.append(float(error))
        self.bound.append(float(bound))


@dataclass
class VarianceTracker:
    """Welford running mean and unbiased variance."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def track_variance(tracker: VarianceTracker, value: float) -> VarianceTracker:
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    tracker.count += 1
    delta = value - tracker.mean
    tracker.mean += delta / tracker.count
    tracker.m2 += delta * (value - tracker.mean)
    return tracker


def hoeffding_margin(horizon: int, delta: float) -> float:
    """``sqrt((T/2) ln(1/delta))``: the slack in the exploration-count bound."""
    return math.sqrt(horizon / 2.0 * math.log(1.0 / delta))


def exploration_sum_bound(lambda1: float, horizon: int, d: int) -> float:
    """Closed-form ceiling on ``sum_t lambda1 sqrt(ln(d t) / t)`` for ``t <= T``."""
    T = horizon
    return lambda1 * math.sqrt(T) * math.sqrt(math.log(d * T)) * math.sqrt(1.0 + math.log(T))


def checkpoints_for(horizon: int, extra: Optional[Sequence[int]] = None) -> List[int]:
    """Powers of two up to ``horizon``, plus ``horizon`` itself and any extras."""
    points = {2**k for k in range(int(math.log2(horizon)) + 1)} | {horizon}
    if extra:
        points |= {int(t) for t in extra if 1 <= t <= horizon}
    return sorted(points)
