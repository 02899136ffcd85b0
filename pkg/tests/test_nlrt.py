"""Summary statistics, sample banks and the neighbourhood ratio test."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from bsfrecon.nlrt import (SampleBank, SummaryStat, bank_from_models,
                           build_bank, neighbour_counts, nlrt_decide,
                           nlrt_statistic, ratio_from_counts, summary_acf,
                           summary_moments)
from bsfrecon.field import sample_integral_obs
from bsfrecon.stochastic import RngStream

from conftest import exp1_models, small_scene


def toy_bank():
    h0 = np.array([[0.0, 0.0], [0.05, 0.0], [1.0, 1.0]])
    h1 = np.array([[0.0, 0.08], [2.0, 2.0], [3.0, 3.0]])
    return SampleBank(h0, h1, SummaryStat("ACF", lags=(1, 2)))


class TestSummaryACF:
    def test_constant_series(self):
        np.testing.assert_array_equal(summary_acf(np.full(10, 3.0)),
                                      np.zeros(4))

    def test_alternating(self):
        z = np.tile([1.0, -1.0], 25)
        assert summary_acf(z, [1])[0] == pytest.approx(-49 / 50, abs=1e-14)

    def test_matches_definition(self):
        z = np.random.default_rng(0).normal(size=30)
        d = z - z.mean()
        expect = [np.sum(d[:-t] * d[t:]) / np.sum(d * d) for t in (1, 2, 3, 4)]
        np.testing.assert_allclose(summary_acf(z), expect, rtol=1e-13)

    def test_bartlett_band(self):
        z = np.random.default_rng(1).normal(size=(1000, 50))
        r1 = summary_acf(z, [1])[:, 0]
        assert np.mean(np.abs(r1) <= 3 / np.sqrt(50)) >= 0.95

    def test_batch_matches_rows(self):
        z = np.random.default_rng(2).normal(size=(4, 20))
        batch = summary_acf(z)
        for row, out in zip(z, batch):
            np.testing.assert_allclose(summary_acf(row), out, rtol=1e-14)

    def test_lag_too_large(self):
        with pytest.raises(ValueError):
            summary_acf(np.arange(4.0), [4])

    @given(arrays(float, 12, elements=st.floats(-1e3, 1e3)))
    def test_bounded(self, z):
        assert np.all(np.abs(summary_acf(z)) <= 1 + 1e-12)


class TestSummaryStat:
    def test_moments(self):
        z = np.array([1.0, 2.0, 3.0, 4.0])
        out = summary_moments(z, ("mean", "variance"))
        np.testing.assert_allclose(out, [2.5, 1.25])

    def test_concat_dimension(self):
        s = SummaryStat("Concat", parts=(SummaryStat("ACF", lags=(1, 2)),
                                         SummaryStat("Moments",
                                                     which=("mean",))))
        assert s.dim() == 3
        assert s(np.arange(10.0)).shape == (3,)

    def test_round_trip(self):
        s = SummaryStat("Concat", parts=(SummaryStat("ACF"),
                                         SummaryStat("Moments")))
        assert SummaryStat.from_dict(s.to_dict()) == s

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            SummaryStat("Mode")


class TestStatistic:
    def test_no_neighbours(self):
        assert ratio_from_counts(0, 0, 0.1) == 1.0

    def test_hundred_to_zero(self):
        assert ratio_from_counts(100, 0, 0.1) == pytest.approx(1001.0)

    def test_counts_include_boundary(self):
        bank = toy_bank()
        n0, n1 = neighbour_counts(bank, [0.0, 0.0], 0.08)
        assert (int(n0), int(n1)) == (2, 1)

    def test_statistic_from_observation(self):
        bank = toy_bank()
        z = np.tile([1.0, -1.0], 5)
        s = bank.summary(z)
        n0, n1 = neighbour_counts(bank, s, 0.5)
        assert nlrt_statistic(bank, z, 0.5, 0.1) == pytest.approx(
            (n0 + 0.1) / (n1 + 0.1))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            neighbour_counts(toy_bank(), [0.0, 0.0, 0.0], 0.1)

    def test_bad_tolerances(self):
        with pytest.raises(ValueError):
            neighbour_counts(toy_bank(), [0.0, 0.0], 0.0)
        with pytest.raises(ValueError):
            nlrt_statistic(toy_bank(), np.arange(10.0), 0.1, 0.0)

    @given(arrays(float, 2, elements=st.floats(-3, 3)),
           st.floats(0.01, 2), st.floats(0.01, 2))
    def test_acceptance_monotone_in_delta(self, s, d1, d2):
        bank = toy_bank()
        lo, hi = sorted((d1, d2))
        a0, a1 = neighbour_counts(bank, s, lo)
        b0, b1 = neighbour_counts(bank, s, hi)
        assert b0 >= a0 and b1 >= a1

    @given(arrays(float, 2, elements=st.floats(-3, 3)), st.floats(0.01, 2))
    def test_swap_symmetry(self, s, delta):
        bank = toy_bank()
        swapped = SampleBank(bank.h1, bank.h0, bank.summary)
        n0, n1 = neighbour_counts(bank, s, delta)
        m0, m1 = neighbour_counts(swapped, s, delta)
        assert (m0, m1) == (n1, n0)
        assert ratio_from_counts(m0, m1, 0.1) == (n1 + 0.1) / (n0 + 0.1)

    def test_standardized_bank(self):
        bank = SampleBank(toy_bank().h0 * 10, toy_bank().h1 * 10,
                          SummaryStat("ACF", lags=(1, 2)), standardize=True)
        n0, n1 = neighbour_counts(bank, [0.0, 0.0], 0.1)
        assert int(n0) >= 1


class TestDecide:
    def test_tie_is_zero(self):
        g = float(np.exp(-0.4659))
        assert nlrt_decide(g, g) == 0

    def test_zero_statistic(self):
        assert nlrt_decide(0.0, np.exp(-0.4659)) == 1

    def test_vectorized(self):
        np.testing.assert_array_equal(nlrt_decide([0.1, 1.0, 2.0], 1.0),
                                      [1, 0, 0])


class TestBank:
    def test_single_entry(self):
        scene = small_scene()
        bank = build_bank(scene, 1, SummaryStat("ACF"), RngStream(0))
        assert bank.J == 1 and bank.dim == 4

    def test_one_hypothesis(self):
        scene = small_scene()
        half = build_bank(scene, 7, SummaryStat("ACF"), RngStream(0),
                          hypothesis=1)
        full = build_bank(scene, 7, SummaryStat("ACF"), RngStream(0))
        np.testing.assert_array_equal(half, full.h1)

    def test_deterministic(self):
        scene = small_scene()
        a = build_bank(scene, 50, SummaryStat("ACF"), RngStream(4))
        b = build_bank(scene, 50, SummaryStat("ACF"), RngStream(4))
        np.testing.assert_array_equal(a.h0, b.h0)
        np.testing.assert_array_equal(a.h1, b.h1)
        assert a.key() == b.key()

    def test_bank_includes_noise(self):
        h0, h1 = exp1_models()
        quiet = bank_from_models(h0, h1, 10, 20.0, 1e-9, 10, 200,
                                 SummaryStat("Moments", which=("variance",)),
                                 RngStream(1))
        loud = bank_from_models(h0, h1, 10, 20.0, 5.0, 10, 200,
                                SummaryStat("Moments", which=("variance",)),
                                RngStream(1))
        assert loud.h0.mean() > quiet.h0.mean() + 10

    def test_save_load(self, tmp_path):
        scene = small_scene()
        bank = build_bank(scene, 20, SummaryStat("ACF"), RngStream(2))
        path = str(tmp_path / "bank.npz")
        bank.save(path)
        back = SampleBank.load(path)
        np.testing.assert_array_equal(back.h0, bank.h0)
        assert back.summary == bank.summary
        assert back.key() == bank.key()

    def test_discrimination(self):
        scene = small_scene(K=50, M=50)
        bank = build_bank(scene, 2000, SummaryStat("ACF"), RngStream(3))
        stats = []
        for label in (0, 1):
            Z = sample_integral_obs(scene.model(label), scene.K, scene.T,
                                    scene.sigma_i, scene.substeps,
                                    RngStream(8, label), size=200)
            stats.append(nlrt_statistic(bank, Z, 0.1, 0.1))
        assert stats[0].mean() > stats[1].mean()
