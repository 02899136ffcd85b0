"""Kernels, jittered Cholesky, Gaussian sampling and random streams."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from bsfrecon.stochastic import (CovKernel, MvnSpec, NotPositiveDefinite,
                                 RngStream, chol_with_jitter, cross_gram, gram,
                                 kernel_eval, mvn_logpdf, mvn_sample)

FAMILIES = ["SquaredExponential", "Matern12", "Matern52"]


class TestKernelEval:
    def test_se_diagonal(self):
        assert kernel_eval(CovKernel("SquaredExponential", 1.0, 0.5),
                           [0.3, 0.2], [0.3, 0.2]) == 1.0

    def test_matern12_unit_distance(self):
        k = CovKernel("Matern12", 1.0, 1.0)
        assert kernel_eval(k, [0.0], [1.0]) == pytest.approx(
            0.36787944117144232, rel=1e-15)

    def test_matern52_values(self):
        k = CovKernel("Matern52", 1.0, 1.0)
        assert kernel_eval(k, [0.0], [0.0]) == 1.0
        assert k.of_distance(1.0) == pytest.approx(0.52399410883182031,
                                                   rel=1e-14)

    def test_se_value(self):
        k = CovKernel("SquaredExponential", 1.0, 0.5)
        assert k.of_distance(1.0) == pytest.approx(0.13533528323661269,
                                                   rel=1e-14)

    def test_scale_is_standard_deviation(self):
        k = CovKernel("Matern52", 2.5, 0.3)
        assert k.variance == 6.25
        assert kernel_eval(k, [1.0, 1.0], [1.0, 1.0]) == 6.25

    @pytest.mark.parametrize("bad", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_nonpositive_parameters_rejected(self, bad):
        with pytest.raises(ValueError):
            CovKernel("Matern12", *bad)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            CovKernel("Cauchy", 1.0, 1.0)

    @given(st.sampled_from(FAMILIES),
           arrays(float, 2, elements=st.floats(-10, 10)),
           arrays(float, 2, elements=st.floats(-10, 10)))
    def test_symmetric_and_stationary(self, fam, x, y):
        k = CovKernel(fam, 1.3, 0.7)
        assert kernel_eval(k, x, y) == kernel_eval(k, y, x)
        shift = np.array([2.0, -1.0])
        assert kernel_eval(k, x + shift, y + shift) == pytest.approx(
            kernel_eval(k, x, y), abs=1e-12)

    def test_dict_round_trip(self):
        k = CovKernel("Matern52", 5.3068, 0.0344)
        assert CovKernel.from_dict(k.to_dict()) == k


class TestGram:
    def test_one_point(self):
        np.testing.assert_array_equal(
            gram(CovKernel("Matern12", 2.0, 1.0), [[0.0, 0.0]]), [[4.0]])

    def test_duplicate_points(self):
        G = gram(CovKernel("SquaredExponential", 1.0, 0.5), [[1.0, 1.0]] * 2)
        np.testing.assert_array_equal(G, np.ones((2, 2)))

    def test_collinear_matern12(self):
        G = gram(CovKernel("Matern12", 1.0, 1.0), [[0.0], [1.0], [2.0]])
        e1, e2 = np.exp(-1.0), np.exp(-2.0)
        np.testing.assert_allclose(G, [[1, e1, e2], [e1, 1, e1], [e2, e1, 1]],
                                   rtol=1e-15)

    def test_one_dimensional_input_means_times(self):
        G = gram(CovKernel("Matern12", 1.0, 1.0), np.array([0.0, 1.0]))
        assert G.shape == (2, 2)

    def test_cross_gram_matches_gram_block(self):
        k = CovKernel("Matern52", 1.0, 0.4)
        pts = np.random.default_rng(0).uniform(size=(6, 2))
        np.testing.assert_allclose(cross_gram(k, pts[:2], pts[2:]),
                                   gram(k, pts)[:2, 2:], rtol=1e-14)


class TestCholWithJitter:
    def test_identity(self):
        L, jitter = chol_with_jitter(np.eye(3))
        np.testing.assert_array_equal(L, np.eye(3))
        assert jitter == 0.0

    def test_singular_needs_jitter(self):
        L, jitter = chol_with_jitter(np.ones((2, 2)))
        assert 0.0 < jitter <= 1e-6
        np.testing.assert_allclose(L @ L.T, np.ones((2, 2)) + jitter * np.eye(2),
                                   rtol=1e-12)

    def test_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            chol_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_dense_grid_succeeds(self, fam):
        xs = np.linspace(-5, 5, 30)
        X, Y = np.meshgrid(xs, xs)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        _, jitter = chol_with_jitter(gram(CovKernel(fam, 1.0, 0.5), pts))
        assert jitter <= 1e-6

    def test_reconstruction_error(self):
        A = gram(CovKernel("Matern52", 1.0, 1.0), np.linspace(0, 5, 40))
        spec = MvnSpec.from_cov(np.zeros(40), A)
        err = np.linalg.norm(spec.chol_lower @ spec.chol_lower.T - spec.cov)
        assert err / np.linalg.norm(spec.cov) < 1e-10


class TestMvn:
    def test_logpdf_standard(self):
        spec = MvnSpec.from_cov([0.0], [[1.0]])
        assert mvn_logpdf(spec, [0.0]) == pytest.approx(-0.91893853320467274,
                                                        rel=1e-15)

    def test_logpdf_bivariate(self):
        spec = MvnSpec.from_cov([0.0, 0.0], np.eye(2))
        assert mvn_logpdf(spec, [1.0, 1.0]) == pytest.approx(
            -2.8378770664093455, rel=1e-15)

    def test_logpdf_matches_scipy(self):
        rng = np.random.default_rng(1)
        B = rng.normal(size=(4, 4))
        cov = B @ B.T + np.eye(4)
        mean = rng.normal(size=4)
        x = rng.normal(size=(5, 4))
        spec = MvnSpec.from_cov(mean, cov)
        np.testing.assert_allclose(
            mvn_logpdf(spec, x),
            stats.multivariate_normal(mean, cov).logpdf(x), rtol=1e-12)

    def test_mean_shift_invariance(self):
        cov = [[2.0, 0.3], [0.3, 1.0]]
        mu = np.array([1.0, -2.0])
        x = np.array([0.4, 0.1])
        a = mvn_logpdf(MvnSpec.from_cov(mu, cov), x)
        b = mvn_logpdf(MvnSpec.from_cov([0.0, 0.0], cov), x - mu)
        assert a == pytest.approx(b, abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mvn_logpdf(MvnSpec.from_cov([0.0, 0.0], np.eye(2)), [1.0, 2.0, 3.0])

    def test_density_integrates_to_one(self):
        spec = MvnSpec.from_cov([0.2, -0.1], [[1.0, 0.5], [0.5, 2.0]])
        total, _ = integrate.dblquad(
            lambda y, x: np.exp(mvn_logpdf(spec, [x, y])), -12, 12, -14, 14,
            epsabs=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_zero_covariance_limit(self):
        spec = MvnSpec.from_cov([3.0, 4.0], np.zeros((2, 2)))
        draws = mvn_sample(spec, RngStream(5), size=100)
        np.testing.assert_allclose(draws, np.broadcast_to([3.0, 4.0], (100, 2)),
                                   atol=1e-4)

    def test_unit_variance(self):
        spec = MvnSpec.from_cov([0.0], [[1.0]])
        x = mvn_sample(spec, RngStream(7), size=10**6)[:, 0]
        assert abs(x.var() - 1.0) < 3 * np.sqrt(2 / 10**6)

    def test_empirical_covariance(self):
        rng = np.random.default_rng(3)
        B = rng.normal(size=(6, 6))
        cov = B @ B.T + 0.5 * np.eye(6)
        x = mvn_sample(MvnSpec.from_cov(np.zeros(6), cov), RngStream(3),
                       size=10**5)
        err = np.linalg.norm(np.cov(x.T) - cov) / np.linalg.norm(cov)
        assert err < 0.05

    def test_reproducible(self):
        spec = MvnSpec.from_cov(np.zeros(3), np.eye(3))
        a = mvn_sample(spec, RngStream(11, 2), size=4)
        b = mvn_sample(spec, RngStream(11, 2), size=4)
        np.testing.assert_array_equal(a, b)


class TestRngStream:
    def test_same_key_same_draws(self):
        a = RngStream(42, 3).generator().normal(size=5)
        b = RngStream(42, 3).generator().normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RngStream(42, 3).generator().normal(size=5)
        b = RngStream(42, 4).generator().normal(size=5)
        assert not np.array_equal(a, b)

    def test_spawn_is_pure(self):
        s = RngStream(1, 0)
        np.testing.assert_array_equal(s.spawn(2, 5).generator().random(3),
                                      s.spawn(2, 5).generator().random(3))
        assert s.spawn(2).path == (2,)
        assert s.path == ()
