"""Warping functions, their inverses and log-derivatives."""

import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from bsfrecon import warping
from bsfrecon.warping import (BernoulliThreshold, DomainError, GammaWarp,
                              IdentityWarp, TukeyGHWarp, warp_forward,
                              warp_from_dict, warp_inverse, warp_log_dG)

SHIPPED = [
    IdentityWarp(),
    TukeyGHWarp(0.1, 0.4, 1.0, 1.0),
    GammaWarp(2.0, 1.0),
    GammaWarp(53.7457, 0.1771),
    GammaWarp(43.3694, 0.2417),
    GammaWarp(53.7457, 0.1771, offset=10.0, factor=-1.0),
    GammaWarp(43.3694, 0.2417, offset=10.0, factor=-1.0),
]
IDS = ["identity", "tukey", "gamma21", "gamma_h0", "gamma_h1", "ct_h0", "ct_h1"]


def fd_log_dG(w, v, h=1e-6):
    return np.log((w.inverse(v + h) - w.inverse(v - h)) / (2 * h))


class TestForward:
    def test_tukey_at_zero_is_location(self):
        assert warp_forward(TukeyGHWarp(0.1, 0.4, 1.0, 1.0), 0.0) == 1.0

    def test_tukey_closed_form_values(self):
        w = TukeyGHWarp(0.1, 0.4, 1.0, 1.0)
        assert w.forward(1.0) == pytest.approx(2.2845604941583327, rel=1e-14)
        assert w.forward(-2.0) == pytest.approx(-3.0342212810195863, rel=1e-14)

    def test_tukey_literal_h_convention(self):
        w = TukeyGHWarp(0.1, 0.4, 1.0, 1.0, half_h=False)
        expect = 1.0 + (np.exp(0.1) - 1.0) / 0.1 * np.exp(0.4)
        assert w.forward(1.0) == pytest.approx(expect, rel=1e-14)

    def test_identity(self):
        assert warp_forward(IdentityWarp(), 1.7) == 1.7

    def test_gamma_median(self):
        # bisection of the regularised incomplete gamma at 1/2
        w = GammaWarp(53.7457, 0.1771)
        assert w.forward(0.0) == pytest.approx(9.4593956688481572, rel=1e-12)

    def test_gamma_quantile_at_phi_one(self):
        assert GammaWarp(2.0, 1.0).forward(1.0) == pytest.approx(
            3.2995265591158551, rel=1e-12)

    def test_affine_post_map(self):
        w = GammaWarp(53.7457, 0.1771, offset=10.0, factor=-1.0)
        assert w.forward(0.0) == pytest.approx(10.0 - 9.4593956688481572,
                                               rel=1e-12)

    def test_saturation_warns_once(self, monkeypatch):
        monkeypatch.setattr(warping, "_clamp_warned", False)
        w = GammaWarp(2.0, 1.0)
        with pytest.warns(RuntimeWarning):
            hi = w.forward(40.0)
        assert np.isfinite(hi)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            w.forward(-40.0)

    @pytest.mark.parametrize("w", SHIPPED, ids=IDS)
    def test_strictly_increasing(self, w):
        z = np.arange(-6.0, 6.0 + 1e-9, 1e-3)
        assert np.all(np.diff(w.forward(z)) > 0)


class TestInverse:
    def test_identity(self):
        assert warp_inverse(IdentityWarp(), -2.3) == -2.3

    def test_tukey_at_location(self):
        assert warp_inverse(TukeyGHWarp(0.1, 0.4, 1.0, 1.0), 1.0) == 0.0

    def test_gamma_round_trip_against_quadrature(self):
        # v is computed from an independent quadrature of the Gamma density
        target = stats.norm.cdf(1.0)
        dens = lambda x: x * np.exp(-x)
        lo, hi = 0.0, 10.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if integrate.quad(dens, 0.0, mid, epsabs=1e-14)[0] < target:
                lo = mid
            else:
                hi = mid
        assert GammaWarp(2.0, 1.0).inverse(lo) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("w", SHIPPED, ids=IDS)
    def test_round_trip_integers(self, w):
        z = np.arange(-5.0, 6.0)
        np.testing.assert_allclose(w.inverse(w.forward(z)), z, atol=1e-8)

    @pytest.mark.parametrize("w", SHIPPED, ids=IDS)
    def test_forward_of_inverse(self, w):
        v = w.forward(np.linspace(-4, 4, 17))
        back = w.forward(w.inverse(v))
        assert np.all(np.abs(back - v) <= 1e-8 * np.maximum(1.0, np.abs(v)))

    @given(st.floats(-6, 6))
    def test_tukey_round_trip_property(self, z):
        w = TukeyGHWarp(0.1, 0.4, 1.0, 1.0)
        assert abs(w.inverse(w.forward(z)) - z) <= 1e-8

    @given(st.floats(-0.5, 0.5), st.floats(0.0, 1.0), st.floats(-6, 6))
    def test_tukey_parameter_family(self, g, h, z):
        w = TukeyGHWarp(g, h, 0.3, 2.0)
        assert abs(w.inverse(w.forward(z)) - z) <= 1e-8

    def test_outside_range(self):
        with pytest.raises(DomainError):
            GammaWarp(2.0, 1.0).inverse(-0.5)
        with pytest.raises(DomainError):
            GammaWarp(2.0, 1.0, offset=10.0, factor=-1.0).inverse(10.5)

    def test_boundary_rejected(self):
        with pytest.raises(DomainError):
            GammaWarp(2.0, 1.0).inverse(0.0)


class TestLogDG:
    def test_identity_is_zero(self):
        np.testing.assert_array_equal(warp_log_dG(IdentityWarp(), [-3.0, 5.0]),
                                      [0.0, 0.0])

    def test_tukey_at_location(self):
        w = TukeyGHWarp(0.1, 0.4, 1.0, 1.0)
        assert w.log_dG(1.0) == pytest.approx(0.0, abs=1e-14)
        assert fd_log_dG(w, 1.0) == pytest.approx(0.0, abs=1e-6)

    def test_gamma_value(self):
        # log f(2) - log phi(G(2)) in 40-digit arithmetic
        w = GammaWarp(2.0, 1.0)
        assert w.log_dG(2.0) == pytest.approx(-0.35963234846793713, rel=1e-12)
        assert w.log_dG(2.0) == pytest.approx(fd_log_dG(w, 2.0), abs=1e-6)

    @pytest.mark.parametrize("w", SHIPPED, ids=IDS)
    def test_matches_finite_difference(self, w):
        v = w.forward(np.linspace(-3, 3, 13))
        np.testing.assert_allclose(w.log_dG(v), fd_log_dG(w, v), atol=1e-5)

    @pytest.mark.parametrize("w", SHIPPED, ids=IDS)
    def test_derivative_bundle(self, w):
        v = w.forward(np.linspace(-2.5, 2.5, 7))
        G, dG, d2G, dl, d2l = w.derivatives(v)
        h = 1e-5
        np.testing.assert_allclose(G, w.inverse(v), atol=1e-12)
        np.testing.assert_allclose(np.log(dG), w.log_dG(v), atol=1e-10)
        fd_dl = (w.log_dG(v + h) - w.log_dG(v - h)) / (2 * h)
        np.testing.assert_allclose(dl, fd_dl, rtol=1e-5, atol=1e-6)
        Gp, dGp, _, dlp, _ = w.derivatives(v + h)
        Gm, dGm, _, dlm, _ = w.derivatives(v - h)
        np.testing.assert_allclose(d2G, (dGp - dGm) / (2 * h), rtol=1e-5,
                                   atol=1e-6)
        np.testing.assert_allclose(d2l, (dlp - dlm) / (2 * h), rtol=1e-4,
                                   atol=1e-5)

    def test_outside_range(self):
        with pytest.raises(DomainError):
            GammaWarp(2.0, 1.0).log_dG(-1.0)


class TestMarginalLaw:
    @pytest.mark.parametrize("a,b", [(53.7457, 0.1771), (2.0, 1.0)])
    def test_gamma_ks(self, a, b):
        z = np.random.default_rng(0).standard_normal(10**5)
        v = GammaWarp(a, b).forward(z)
        d = stats.kstest(v, stats.gamma(a, scale=b).cdf).statistic
        assert d < 1.63 / np.sqrt(10**5)

    def test_cdf_consistency(self):
        w = GammaWarp(43.3694, 0.2417, offset=10.0, factor=-1.0)
        z = np.linspace(-2, 2, 5)
        np.testing.assert_allclose(w.cdf(w.forward(z)), stats.norm.cdf(z),
                                   atol=1e-10)


class TestSerialization:
    @pytest.mark.parametrize("w", SHIPPED, ids=IDS)
    def test_round_trip(self, w):
        assert warp_from_dict(w.to_dict()) == w

    def test_post_map(self):
        w = warp_from_dict({"family": "Gamma", "a": 2, "b": 1,
                            "post_map": [10, -1]})
        assert w == GammaWarp(2.0, 1.0, offset=10.0, factor=-1.0)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            warp_from_dict({"family": "SumTanh"})

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            GammaWarp(-1.0, 1.0)
        with pytest.raises(ValueError):
            TukeyGHWarp(0.1, -0.2, 0.0, 1.0)


class TestBernoulliThreshold:
    def test_from_probability(self):
        t = BernoulliThreshold.from_probability(0.5)
        assert t.c == 0.0
        assert t.pi == 0.5

    def test_tie_is_one(self):
        np.testing.assert_array_equal(
            BernoulliThreshold(0.3).apply([0.29, 0.3, 0.31]), [0, 1, 1])

    @given(st.floats(0.01, 0.99))
    def test_pi_round_trip(self, pi):
        assert BernoulliThreshold.from_probability(pi).pi == pytest.approx(
            pi, abs=1e-12)

    def test_bad_probability(self):
        with pytest.raises(ValueError):
            BernoulliThreshold.from_probability(1.0)
