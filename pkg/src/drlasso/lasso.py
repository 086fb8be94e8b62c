"""L1-penalized least squares by cyclic coordinate descent.

The objective throughout is the mean-squared loss with an L1 penalty,

.. math::

    \\frac{1}{t} \\sum_{\\tau=1}^{t} (y_\\tau - x_\\tau^T \\beta)^2 + \\lambda ||\\beta||_1,

with no intercept and no feature standardization. Two kernels solve it:
one works on the sufficient statistics ``(X^T X / t, X^T y / t)`` and costs
O(d) per changed coordinate, the other works on the design matrix directly
and is used when ``d`` is too large for a dense Gram matrix or exceeds the
sample count. If descent stalls short of the KKT tolerance, the solver
finishes with an exact solve on the signed support or restarts from the
LARS-lasso homotopy solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit
from sklearn.linear_model import lars_path, lars_path_gram

DEFAULT_TOL = 1e-7
DEFAULT_KKT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 10_000

# Coordinate-descent sweeps tried before falling back to the homotopy start.
_FIRST_PASS_SWEEPS = 1000
_MAX_ACTIVE_PASSES = 100_000

# Above this dimension the Gram matrix is not materialized.
_MAX_GRAM_DIM = 2048


class LassoConvergenceError(RuntimeError):
    """Raised when coordinate descent exhausts its sweep budget.

    The last iterate and its KKT residual are kept on the exception so the
    caller can inspect or reuse them.
    """

    def __init__(self, beta: np.ndarray, residual: float, sweeps: int):
        self.beta = beta
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(
            f"coordinate descent did not converge in {sweeps} sweeps "
            f"(kkt residual {residual:.3e})"
        )


@dataclass(frozen=True)
class RegressionSample:
    features: np.ndarray
    target: float

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim != 1:
            raise ValueError("features must be a 1-d vector")
        if not np.all(np.isfinite(features)) or not np.isfinite(self.target):
            raise ValueError("regression sample must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", float(self.target))


@dataclass
class LassoProblem:
    """A design matrix, a target vector and a nonnegative penalty.

    Parameters
    ----------
    features : array-like, shape (t, d)
    targets : array-like, shape (t,)
    penalty : float
        The coefficient ``lambda`` in front of the L1 norm.
    """

    features: np.ndarray
    targets: np.ndarray
    penalty: float
    _moments: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=float)
        self.targets = np.ascontiguousarray(self.targets, dtype=float)
        if self.features.ndim != 2:
            raise ValueError("features must be a (t, d) matrix")
        if self.targets.shape != (self.features.shape[0],):
            raise ValueError(
                f"targets has shape {self.targets.shape}, expected ({self.features.shape[0]},)"
            )
        if self.features.shape[0] < 1:
            raise ValueError("a lasso problem needs at least one sample")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise ValueError("features and targets must be finite")
        if not self.penalty >= 0:
            raise ValueError(f"penalty must be nonnegative, got {self.penalty}")
        self.penalty = float(self.penalty)

    @classmethod
    def from_samples(cls, samples: Sequence[RegressionSample], penalty: float) -> "LassoProblem":
        if len(samples) == 0:
            raise ValueError("a lasso problem needs at least one sample")
        dims = {s.features.shape[0] for s in samples}
        if len(dims) != 1:
            raise ValueError(f"samples have inconsistent dimensions {sorted(dims)}")
        X = np.vstack([s.features for s in samples])
        y = np.array([s.target for s in samples])
        return cls(X, y, penalty)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def moments(self):
        """Return ``(X^T X / t, X^T y / t)``, computed once and cached."""
        if self._moments is None:
            t = self.n_samples
            self._moments = (
                self.features.T @ self.features / t,
                self.features.T @ self.targets / t,
            )
        return self._moments


@dataclass(frozen=True)
class LassoSolution:
    beta_hat: np.ndarray
    iterations: int
    kkt_residual: float


def soft_threshold(z: float, gamma: float) -> float:
    """Return ``sign(z) * max(|z| - gamma, 0)``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return float(np.sign(z) * max(abs(z) - gamma, 0.0))


@njit(cache=True)
def _soft(z, gamma):
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@njit(cache=True)
def _kkt_from_gradient(grad, beta, lam):
    worst = 0.0
    for j in range(beta.shape[0]):
        if beta[j] > 0.0:
            v = abs(grad[j] + lam)
        elif beta[j] < 0.0:
            v = abs(grad[j] - lam)
        else:
            v = abs(grad[j]) - lam
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _gram_kkt(gram, xty, beta, lam):
    grad = -2.0 * (xty - gram @ beta)
    return _kkt_from_gradient(grad, beta, lam)


@njit(cache=True)
def _cd_moments(gram, xty, lam, beta, tol, kkt_tol, max_sweeps, stop_on_stall):
    # Maintains h = gram @ beta; the gradient of the loss is -2 (xty - h).
    # Returns (sweeps used, kkt, status): 0 converged, 1 stalled, 2 out of sweeps.
    d = xty.shape[0]
    half = 0.5 * lam
    h = gram @ beta
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(d):
            a = gram[j, j]
            old = beta[j]
            if a <= 0.0:
                new = 0.0
            else:
                c = xty[j] - h[j] + a * old
                new = _soft(c, half) / a
            delta = new - old
            if delta != 0.0:
                beta[j] = new
                for k in range(d):
                    h[k] += gram[k, j] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change <= tol:
            h = gram @ beta
            kkt = _gram_kkt(gram, xty, beta, lam)
            if kkt <= kkt_tol:
                return sweep + 1, kkt, 0
            if stop_on_stall:
                return sweep + 1, kkt, 1
    return max_sweeps, _gram_kkt(gram, xty, beta, lam), 2


def _polish(gram, xty, lam, beta):
    """Solve the stationarity equations on the current signed support exactly.

    Returns the polished vector, or ``None`` if it changes a sign or the
    support is rank deficient.
    """
    active = np.flatnonzero(beta)
    if active.size == 0:
        return None
    signs = np.sign(beta[active])
    sub = gram[np.ix_(active, active)]
    try:
        values = np.linalg.solve(sub, xty[active] - 0.5 * lam * signs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(values)) or np.any(np.sign(values) != signs):
        return None
    out = np.zeros_like(beta)
    out[active] = values
    return out


@njit(cache=True)
def _sweep_design(Xt, col_sq, resid, beta, inv_t, half, active_only):
    # One cyclic pass. Returns (largest coefficient change, largest KKT
    # violation among the coordinates visited, measured before their update).
    d = Xt.shape[0]
    n = Xt.shape[1]
    lam = 2.0 * half
    max_change = 0.0
    worst = 0.0
    for j in range(d):
        old = beta[j]
        if active_only and old == 0.0:
            continue
        a = col_sq[j]
        if a <= 0.0:
            new = 0.0
        else:
            c = 0.0
            for i in range(n):
                c += Xt[j, i] * resid[i]
            c *= inv_t
            g = -2.0 * c
            if old > 0.0:
                v = abs(g + lam)
            elif old < 0.0:
                v = abs(g - lam)
            else:
                v = max(abs(g) - lam, 0.0)
            if v > worst:
                worst = v
            new = _soft(c + a * old, half) / a
        delta = new - old
        if delta != 0.0:
            beta[j] = new
            for i in range(n):
                resid[i] -= Xt[j, i] * delta
            if abs(delta) > max_change:
                max_change = abs(delta)
    return max_change, worst


@njit(cache=True)
def _design_kkt(Xt, y, beta, lam, inv_t):
    d, n = Xt.shape
    resid = y.copy()
    for j in range(d):
        if beta[j] != 0.0:
            for i in range(n):
                resid[i] -= Xt[j, i] * beta[j]
    grad = -2.0 * inv_t * (Xt @ resid)
    return _kkt_from_gradient(grad, beta, lam)


@njit(cache=True)
def _cd_design(Xt, y, lam, beta, tol, kkt_tol, max_sweeps, stop_on_stall):
    # Xt is the transposed design, shape (d, t), so columns are contiguous.
    # Same return convention as _cd_moments. Only full sweeps count against
    # max_sweeps; between them, passes over the support run until the
    # support's own KKT residual is below kkt_tol.
    d, n = Xt.shape
    inv_t = 1.0 / n
    half = 0.5 * lam
    col_sq = np.empty(d)
    for j in range(d):
        s = 0.0
        for i in range(n):
            s += Xt[j, i] * Xt[j, i]
        col_sq[j] = s * inv_t
    resid = y.copy()
    for j in range(d):
        if beta[j] != 0.0:
            for i in range(n):
                resid[i] -= Xt[j, i] * beta[j]
    sweeps = 0
    while sweeps < max_sweeps:
        change, _ = _sweep_design(Xt, col_sq, resid, beta, inv_t, half, False)
        sweeps += 1
        if change <= tol:
            kkt = _design_kkt(Xt, y, beta, lam, inv_t)
            if kkt <= kkt_tol:
                return sweeps, kkt, 0
            if stop_on_stall:
                return sweeps, kkt, 1
        for _ in range(_MAX_ACTIVE_PASSES):
            change, worst = _sweep_design(Xt, col_sq, resid, beta, inv_t, half, True)
            if change <= tol and worst <= 0.5 * kkt_tol:
                break
    return max_sweeps, _design_kkt(Xt, y, beta, lam, inv_t), 2


def _check_warm_start(warm_start, d):
    if warm_start is None:
        return np.zeros(d)
    beta = np.array(warm_start, dtype=float)
    if beta.shape != (d,):
        raise ValueError(f"warm start has shape {beta.shape}, expected ({d},)")
    return beta


def _solve(run_cd, kkt_of, polish, homotopy, beta, kkt_tol, max_sweeps):
    # Plain coordinate descent handles almost every call. When it stalls
    # short of the KKT tolerance (near-singular or heavily underdetermined
    # designs), try an exact solve on the current signed support, then keep
    # descending; a LARS-lasso homotopy start is the last resort.
    used, kkt, status = run_cd(beta, min(max_sweeps, _FIRST_PASS_SWEEPS), True)
    if status == 0:
        return LassoSolution(beta, int(used), float(kkt))
    candidate = polish(beta)
    if candidate is not None:
        candidate_kkt = kkt_of(candidate)
        if candidate_kkt <= kkt_tol:
            return LassoSolution(candidate, int(used), float(candidate_kkt))
    if used < max_sweeps:
        more, kkt, status = run_cd(beta, max_sweeps - used, False)
        used += more
        if status == 0:
            return LassoSolution(beta, int(used), float(kkt))
    start = homotopy()
    if kkt_of(start) < kkt_of(beta):
        beta[:] = start
        more, kkt, status = run_cd(beta, max_sweeps, False)
        used += more
        if status == 0:
            return LassoSolution(beta, int(used), float(kkt))
    raise LassoConvergenceError(beta, float(kkt_of(beta)), int(used))


def fit_lasso_moments(
    gram: np.ndarray,
    xty: np.ndarray,
    penalty: float,
    warm_start: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    kkt_tol: float = DEFAULT_KKT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    n_samples: Optional[int] = None,
) -> LassoSolution:
    """Solve the lasso given ``gram = X^T X / t`` and ``xty = X^T y / t``.

    This is the path used by the bandit policies, which accumulate the two
    moments incrementally instead of keeping the design matrix around.
    ``n_samples`` is only used by the homotopy fallback.
    """
    gram = np.ascontiguousarray(gram, dtype=float)
    xty = np.ascontiguousarray(xty, dtype=float)
    d = xty.shape[0]
    if gram.shape != (d, d):
        raise ValueError(f"gram has shape {gram.shape}, expected ({d}, {d})")
    if penalty < 0:
        raise ValueError(f"penalty must be nonnegative, got {penalty}")
    lam = float(penalty)
    n = n_samples or d

    def run_cd(beta, sweeps, stall):
        return _cd_moments(gram, xty, lam, beta, tol, kkt_tol, sweeps, stall)

    def homotopy():
        _, _, coef = lars_path_gram(Xy=xty * n, Gram=gram * n, n_samples=n,
                                    alpha_min=lam / 2, method="lasso", return_path=False)
        return np.asarray(coef, dtype=float)

    return _solve(run_cd, lambda b: float(_gram_kkt(gram, xty, b, lam)),
                  lambda b: _polish(gram, xty, lam, b), homotopy,
                  _check_warm_start(warm_start, d), kkt_tol, max_sweeps)


def fit_lasso(
    problem: LassoProblem,
    warm_start: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    kkt_tol: float = DEFAULT_KKT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> LassoSolution:
    """Minimize ``(1/t) ||y - X beta||^2 + penalty * ||beta||_1``.

    Coordinates are visited in order ``0..d-1`` every sweep. The iteration
    stops once a full sweep moves no coefficient by more than ``tol`` and the
    KKT residual is at most ``kkt_tol``.

    Raises
    ------
    LassoConvergenceError
        If ``max_sweeps`` sweeps pass without meeting both criteria.
    """
    d, t = problem.dim, problem.n_samples
    beta = _check_warm_start(warm_start, d)
    if d <= _MAX_GRAM_DIM and t >= d:
        gram, xty = problem.moments()
        return fit_lasso_moments(gram, xty, problem.penalty, beta, tol, kkt_tol,
                                 max_sweeps, n_samples=t)
    X, y, lam = problem.features, problem.targets, problem.penalty
    Xt = np.ascontiguousarray(X.T)

    def run_cd(b, sweeps, stall):
        return _cd_design(Xt, y, lam, b, tol, kkt_tol, sweeps, stall)

    def polish(b):
        active = np.flatnonzero(b)
        XA = X[:, active]
        sub = _polish(XA.T @ XA / t, XA.T @ y / t, lam, b[active])
        if sub is None:
            return None
        out = np.zeros(d)
        out[active] = sub
        return out

    def homotopy():
        _, _, coef = lars_path(X, y, alpha_min=lam / 2, method="lasso", return_path=False)
        return np.asarray(coef, dtype=float)

    return _solve(run_cd, lambda b: kkt_residual(problem, b), polish, homotopy,
                  beta, kkt_tol, max_sweeps)


def kkt_residual(problem: LassoProblem, beta: np.ndarray) -> float:
    """Largest violation of the lasso optimality conditions at ``beta``.

    With ``g = -(2/t) X^T (y - X beta)``, a coordinate contributes
    ``|g_j + penalty * sign(beta_j)|`` if ``beta_j != 0`` and
    ``max(0, |g_j| - penalty)`` otherwise. The result is zero exactly at a
    minimizer.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (problem.dim,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({problem.dim},)")
    resid = problem.targets - problem.features @ beta
    grad = -2.0 / problem.n_samples * (problem.features.T @ resid)
    return float(_kkt_from_gradient(grad, beta, problem.penalty))


def lasso_objective(problem: LassoProblem, beta: np.ndarray) -> float:
    resid = problem.targets - problem.features @ np.asarray(beta, dtype=float)
    return float(resid @ resid / problem.n_samples + problem.penalty * np.abs(beta).sum())
