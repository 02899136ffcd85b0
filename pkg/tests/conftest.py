import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bsfrecon.field import SensorScene, TemporalModel
from bsfrecon.stochastic import CovKernel
from bsfrecon.warping import BernoulliThreshold, IdentityWarp, TukeyGHWarp

settings.register_profile(
    "bsfrecon", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("bsfrecon")


def tukey():
    return TukeyGHWarp(0.1, 0.4, 1.0, 1.0)


def exp1_models(warp=None):
    warp = tukey() if warp is None else warp
    return (TemporalModel(CovKernel("Matern12", 1.0, 1.0), warp),
            TemporalModel(CovKernel("Matern52", 1.0, 1.0), warp))


def small_scene(n_p=4, n_i=4, M=20, K=20, grid_n=8, c=None, warp=None,
                sigma=0.1, seed=0):
    """A toy version of the synthetic scene, small enough for unit tests."""
    xs = np.linspace(-2.0, 2.0, grid_n)
    X, Y = np.meshgrid(xs, xs)
    grid = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.random.default_rng(seed).choice(len(grid), n_p + n_i,
                                             replace=False)
    h0, h1 = exp1_models(warp)
    thr = BernoulliThreshold(0.0 if c is None else c)
    return SensorScene(grid, grid[idx[:n_p]], grid[idx[n_p:]],
                       CovKernel("SquaredExponential", 1.0, 0.5), 0.0, thr,
                       h0, h1, 20.0, M, K, sigma, sigma, substeps=10)


@pytest.fixture
def scene():
    return small_scene()


@pytest.fixture
def identity_models():
    return exp1_models(IdentityWarp())
