import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drlasso.diagnostics import (
    ErrorTrace,
    GramAccumulator,
    VarianceTracker,
    accumulate_gram,
    checkpoints_for,
    estimate_compatibility,
    exploration_sum_bound,
    hoeffding_margin,
    l1_bound,
    l1_error_and_bound,
    track_variance,
)
from drlasso.environment import EnvironmentConfig, sample_context_set

# sqrt(128) * 5 * sqrt(ln(e * 100 * 1000^2 / 0.09) / 1000), evaluated with mpmath at 40 digits
BOUND_T1000 = 8.357727222656501599


def grid_compatibility(M, support, step_a=0.01, step_c=0.1, reach=1.0):
    """Brute-force cone minimum of |I| v^T M v for |I| = 2.

    v_I = (a, s (1 - a)) covers the normalized support part up to a global
    sign; the off-support coordinates run over a uniform grid in
    [-reach, reach]^(d-2), keeping points inside the cone.
    """
    d = M.shape[0]
    rest = [j for j in range(d) if j not in support]
    axis = np.arange(-reach, reach + 1e-12, step_c)
    off = np.array(np.meshgrid(*[axis] * len(rest), indexing="ij")).reshape(len(rest), -1).T
    off = off[np.abs(off).sum(axis=1) <= 3.0]
    best = np.inf
    for a in np.arange(0.0, 1.0 + 1e-12, step_a):
        for s in (-1.0, 1.0):
            V = np.zeros((off.shape[0], d))
            V[:, support[0]], V[:, support[1]] = a, s * (1 - a)
            V[:, rest] = off
            best = min(best, float((2 * np.einsum("ij,jk,ik->i", V, M, V)).min()))
    return math.sqrt(best)


class TestGram:
    def test_single_vector(self):
        acc = accumulate_gram(GramAccumulator.zeros(3), np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(acc.normalized, np.outer([1, 2, 3], [1, 2, 3]))

    def test_basis_vectors(self):
        acc = GramAccumulator.zeros(4)
        accumulate_gram(acc, np.eye(4)[0])
        accumulate_gram(acc, np.eye(4)[1])
        assert np.array_equal(acc.normalized, np.diag([0.5, 0.5, 0.0, 0.0]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            accumulate_gram(GramAccumulator.zeros(3), np.ones(2))

    def test_empty(self):
        with pytest.raises(ValueError):
            GramAccumulator.zeros(2).normalized

    def test_population_covariance(self):
        cfg = EnvironmentConfig(n_arms=10, dim=100, cross_arm_correlation=0.7)
        rng = np.random.default_rng(0)
        acc = GramAccumulator.zeros(100)
        sq = 0.0
        for _ in range(10_000):
            avg = sample_context_set(cfg, rng).mean(axis=0)
            accumulate_gram(acc, avg)
            sq += avg @ avg
        # Independent reference: a large multivariate-normal draw of one
        # feature across arms with the equicorrelation covariance.
        V = np.full((10, 10), 0.7) + 0.3 * np.eye(10)
        ref_rng = np.random.default_rng(1)
        column = ref_rng.multivariate_normal(np.zeros(10), V, size=400_000).mean(axis=1)
        sigma = np.eye(100) * np.mean(column**2)
        assert np.max(np.abs(acc.normalized - sigma)) < 0.05
        assert np.trace(acc.normalized) == pytest.approx(sq / 10_000, rel=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 50))
    def test_symmetric_psd(self, seed, n):
        rng = np.random.default_rng(seed)
        acc = GramAccumulator.zeros(5)
        for _ in range(n):
            accumulate_gram(acc, rng.standard_normal(5))
        G = acc.normalized
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() > -1e-10


class TestCompatibility:
    def test_identity(self):
        rep = estimate_compatibility(np.eye(8), [0, 3, 5], 100_000, np.random.default_rng(0))
        assert 0.98 <= rep.phi_hat <= 1.02
        assert rep.samples_used == 100_000 and rep.support == (0, 3, 5)

    def test_zero_matrix(self):
        rep = estimate_compatibility(np.zeros((5, 5)), [1], 1000, np.random.default_rng(0))
        assert rep.phi_hat == 0.0

    def test_equicorrelated_against_grid(self):
        M = 0.5 * np.eye(6) + 0.5 * np.ones((6, 6))
        want = grid_compatibility(M, [0, 1])
        got = estimate_compatibility(M, [0, 1], 100_000, np.random.default_rng(1)).phi_hat
        assert abs(got - want) <= 0.05 * want

    def test_empty_support(self):
        with pytest.raises(ValueError):
            estimate_compatibility(np.eye(3), [], 10, np.random.default_rng(0))

    def test_ceiling_and_direction(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((6, 6))
        M = A @ A.T / 6
        rep = estimate_compatibility(M, [0, 2], 20_000, rng)
        assert rep.phi_hat**2 <= np.linalg.eigvalsh(M).max() * 2 + 1e-9
        v = rep.direction
        assert np.abs(v[[0, 2]]).sum() == pytest.approx(1.0)
        assert np.abs(np.delete(v, [0, 2])).sum() <= 3.0 + 1e-9
        assert 2 * v @ M @ v == pytest.approx(rep.phi_hat**2)

    def test_adding_psd_does_not_decrease(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((5, 5))
        M = A @ A.T / 5
        B = rng.standard_normal((5, 2))
        base = estimate_compatibility(M, [1, 4], 50_000, np.random.default_rng(7)).phi_hat
        more = estimate_compatibility(M + B @ B.T, [1, 4], 50_000,
                                      np.random.default_rng(7)).phi_hat
        assert more >= base * 0.98


class TestBound:
    def test_reference_value(self):
        mpmath.mp.dps = 40
        exact = (mpmath.sqrt(128) * 5
                 * mpmath.sqrt(mpmath.log(mpmath.e * 100 * mpmath.mpf(10)**6
                                          / mpmath.mpf("0.09")) / 1000))
        assert float(exact) == pytest.approx(BOUND_T1000, rel=1e-15)
        assert l1_bound(1000, 5, 100) == pytest.approx(BOUND_T1000, rel=1e-12)

    def test_zero_error(self):
        beta = np.array([0.1, 0.0, 0.7])
        err, bound = l1_error_and_bound(beta, beta, 10, 2, 3)
        assert err == 0.0 and bound > 0

    def test_error_is_l1(self):
        err, _ = l1_error_and_bound(np.array([1.0, -1.0]), np.array([0.5, 0.5]), 5, 1, 2)
        assert err == 2.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            l1_bound(0, 5, 100)
        with pytest.raises(ValueError):
            l1_bound(10, 5, 100, delta=0.1, delta_prime=0.2)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(3, 10**6), st.integers(1, 1000))
    def test_decreasing(self, t, d):
        assert l1_bound(t + 1, 5, d) < l1_bound(t, 5, d)

    def test_trace(self):
        tr = ErrorTrace()
        tr.record(4, 0.5, 1.0)
        assert (tr.t, tr.l1_error, tr.bound) == ([4], [0.5], [1.0])


class TestVariance:
    def test_constant(self):
        tr = VarianceTracker()
        for _ in range(10):
            track_variance(tr, 3.0)
        assert tr.variance == 0.0 and tr.mean == 3.0

    def test_two_values(self):
        tr = VarianceTracker()
        track_variance(tr, 0.0)
        track_variance(tr, 2.0)
        assert (tr.mean, tr.variance) == (1.0, 2.0)

    def test_matches_two_pass(self):
        rng = np.random.default_rng(4)
        values = 5 + 3 * rng.standard_normal(1000)
        tr = VarianceTracker()
        for v in values:
            track_variance(tr, float(v))
        mean = sum(values) / len(values)
        two_pass = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        assert tr.variance == pytest.approx(two_pass, rel=1e-9)
        assert tr.std == pytest.approx(math.sqrt(two_pass), rel=1e-9)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            track_variance(VarianceTracker(), float("nan"))


class TestExplorationBounds:
    def test_margin(self):
        assert hoeffding_margin(2000, 0.05) == pytest.approx(math.sqrt(1000 * math.log(20)))

    @pytest.mark.parametrize("T", [10, 100, 2000, 10**5])
    def test_closed_form_dominates_sum(self, T):
        exact = sum(math.sqrt(math.log(100 * t) / t) for t in range(1, T + 1))
        assert exploration_sum_bound(1.0, T, 100) >= exact

    def test_checkpoints(self):
        assert checkpoints_for(10) == [1, 2, 4, 8, 10]
        assert checkpoints_for(8, [3, 99]) == [1, 2, 3, 4, 8]
