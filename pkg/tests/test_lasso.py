import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drlasso.lasso import (
    LassoConvergenceError,
    LassoProblem,
    RegressionSample,
    fit_lasso,
    fit_lasso_moments,
    kkt_residual,
    lasso_objective,
    soft_threshold,
)


def enumerate_lasso(X, y, lam):
    """Exact minimizer by trying every sign pattern (d <= 6).

    For a fixed pattern s the stationarity condition is linear:
    G_AA b_A = q_A - (lam/2) s_A. A pattern is feasible when the solution
    carries the assumed signs; among feasible patterns the objective picks
    the minimizer.
    """
    t, d = X.shape
    G, q = X.T @ X / t, X.T @ y / t
    best, best_obj = np.zeros(d), np.inf
    for signs in itertools.product((-1, 0, 1), repeat=d):
        s = np.array(signs, dtype=float)
        A = np.flatnonzero(s)
        b = np.zeros(d)
        if A.size:
            try:
                b[A] = np.linalg.solve(G[np.ix_(A, A)], q[A] - lam / 2 * s[A])
            except np.linalg.LinAlgError:
                continue
            if np.any(np.sign(b[A]) != s[A]):
                continue
        r = y - X @ b
        obj = r @ r / t + lam * np.abs(b).sum()
        if obj < best_obj:
            best, best_obj = b, obj
    return best


def random_problem(rng, t, d, lam, sparsity=None):
    X = rng.standard_normal((t, d))
    beta = np.zeros(d)
    k = sparsity if sparsity is not None else max(1, d // 5)
    beta[rng.choice(d, size=k, replace=False)] = rng.uniform(-1, 1, size=k)
    y = X @ beta + 0.1 * rng.standard_normal(t)
    return LassoProblem(X, y, lam)


class TestClosedForms:
    def test_soft_threshold(self):
        assert soft_threshold(3.0, 1.0) == 2.0
        assert soft_threshold(-3.0, 1.0) == -2.0
        assert soft_threshold(0.5, 1.0) == 0.0

    def test_one_dimensional_ones(self):
        X, y = np.ones((20, 1)), np.ones(20)
        assert fit_lasso(LassoProblem(X, y, 1.0)).beta_hat[0] == pytest.approx(0.5, abs=1e-9)

    def test_one_dimensional_killed(self):
        X, y = np.ones((20, 1)), np.ones(20)
        assert fit_lasso(LassoProblem(X, y, 2.0)).beta_hat[0] == 0.0

    def test_kkt_at_zero(self):
        X, y = np.ones((20, 1)), np.ones(20)
        assert kkt_residual(LassoProblem(X, y, 1.0), np.zeros(1)) == pytest.approx(1.0)

    def test_kkt_of_least_squares(self):
        rng = np.random.default_rng(3)
        X, y = rng.standard_normal((40, 5)), rng.standard_normal(40)
        ls = np.linalg.solve(X.T @ X, X.T @ y)
        assert kkt_residual(LassoProblem(X, y, 0.0), ls) < 1e-10

    def test_zero_design(self):
        sol = fit_lasso(LassoProblem(np.zeros((10, 3)), np.ones(10), 0.1))
        assert np.all(sol.beta_hat == 0)
        assert sol.kkt_residual == 0.0

    def test_penalty_above_lambda_max_gives_zero(self):
        rng = np.random.default_rng(4)
        p = random_problem(rng, 50, 10, 0.0)
        lam_max = np.max(np.abs(2.0 / p.n_samples * p.features.T @ p.targets))
        p.penalty = lam_max * 1.0001
        assert np.all(fit_lasso(p).beta_hat == 0)


@pytest.mark.parametrize("seed", range(20))
def test_matches_enumeration_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    d = 1 + seed % 6
    lam = [0.01, 0.1, 0.5, 1.0][seed % 4]
    p = random_problem(rng, 30, d, lam)
    got = fit_lasso(p).beta_hat
    want = enumerate_lasso(p.features, p.targets, lam)
    assert np.max(np.abs(got - want)) < 1e-4


@pytest.mark.parametrize("lam", [0.01, 0.1, 1.0])
def test_kkt_on_desk_scale_instances(lam):
    rng = np.random.default_rng(int(lam * 1000))
    for _ in range(20):
        p = random_problem(rng, 200, 50, lam, sparsity=5)
        sol = fit_lasso(p)
        assert kkt_residual(p, sol.beta_hat) <= 1e-6


def test_underdetermined_design_path():
    rng = np.random.default_rng(7)
    for lam in (0.05, 0.5):
        p = random_problem(rng, 30, 400, lam, sparsity=3)
        sol = fit_lasso(p)
        assert kkt_residual(p, sol.beta_hat) <= 1e-6


def test_moment_path_agrees_with_design_path():
    rng = np.random.default_rng(8)
    p = random_problem(rng, 80, 12, 0.1)
    G, q = p.moments()
    a = fit_lasso(p).beta_hat
    b = fit_lasso_moments(G, q, 0.1, n_samples=80).beta_hat
    assert np.max(np.abs(a - b)) < 1e-6


def test_warm_start_reaches_same_solution():
    rng = np.random.default_rng(9)
    p = random_problem(rng, 100, 20, 0.05)
    cold = fit_lasso(p).beta_hat
    warm = fit_lasso(p, warm_start=rng.standard_normal(20)).beta_hat
    assert np.max(np.abs(cold - warm)) < 1e-5


def test_budget_exhaustion_raises():
    rng = np.random.default_rng(10)
    p = random_problem(rng, 50, 10, 0.1)
    with pytest.raises(LassoConvergenceError) as info:
        fit_lasso(p, kkt_tol=-1.0, max_sweeps=3)
    assert info.value.beta.shape == (10,)


def test_input_validation():
    with pytest.raises(ValueError):
        LassoProblem(np.ones((3, 2)), np.ones(4), 0.1)
    with pytest.raises(ValueError):
        LassoProblem(np.ones((3, 2)), np.ones(3), -1.0)
    with pytest.raises(ValueError):
        LassoProblem(np.full((3, 2), np.nan), np.ones(3), 0.1)
    with pytest.raises(ValueError):
        kkt_residual(LassoProblem(np.ones((3, 2)), np.ones(3), 0.1), np.zeros(3))
    with pytest.raises(ValueError):
        LassoProblem.from_samples([RegressionSample(np.ones(2), 1.0),
                                   RegressionSample(np.ones(3), 1.0)], 0.1)


def test_from_samples():
    samples = [RegressionSample(np.array([1.0, 0.0]), 2.0),
               RegressionSample(np.array([0.0, 1.0]), -1.0)]
    p = LassoProblem.from_samples(samples, 0.1)
    assert p.features.shape == (2, 2)
    assert list(p.targets) == [2.0, -1.0]


def test_noiseless_recovery():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((500, 20))
    beta = np.zeros(20)
    beta[[2, 7, 13]] = [0.8, -0.5, 0.3]
    sol = fit_lasso(LassoProblem(X, X @ beta, 0.01))
    assert np.abs(sol.beta_hat - beta).sum() < 0.1


problems = st.builds(
    lambda seed, t, d, lam: random_problem(np.random.default_rng(seed), t, d, lam),
    st.integers(0, 2**31 - 1), st.integers(5, 60), st.integers(1, 15),
    st.floats(1e-3, 2.0),
)


@settings(max_examples=60, deadline=None)
@given(problems)
def test_property_kkt_and_optimality(p):
    sol = fit_lasso(p)
    assert kkt_residual(p, sol.beta_hat) <= 1e-6
    # No random nearby point does better.
    rng = np.random.default_rng(0)
    base = lasso_objective(p, sol.beta_hat)
    for _ in range(5):
        probe = sol.beta_hat + 1e-3 * rng.standard_normal(p.dim)
        assert lasso_objective(p, probe) >= base - 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 1.0), st.floats(1.1, 4.0))
def test_property_shrinkage_is_monotone(seed, lam, factor):
    p = random_problem(np.random.default_rng(seed), 40, 8, lam)
    small = np.abs(fit_lasso(p).beta_hat).sum()
    p2 = LassoProblem(p.features, p.targets, lam * factor)
    assert np.abs(fit_lasso(p2).beta_hat).sum() <= small + 1e-7


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_property_joint_scaling(seed, c):
    # Scaling targets and penalty together scales the solution.
    p = random_problem(np.random.default_rng(seed), 40, 6, 0.2)
    a = fit_lasso(p).beta_hat
    b = fit_lasso(LassoProblem(p.features, c * p.targets, c * 0.2)).beta_hat
    assert np.allclose(b, c * a, atol=1e-5 * max(1.0, c))
