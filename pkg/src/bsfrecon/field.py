"""
Simulation of the hierarchical spatial-temporal model.

A latent spatial Gaussian field ``g`` is thresholded into the binary field
``y = 1{g >= c}``.  At every sensor location a temporal latent GP is drawn
from the hypothesis selected by the local label, warped, and observed either
at fixed instants (point sensors) or through integrals over consecutive
intervals (integral sensors).

Matern-1/2 and Matern-5/2 temporal paths on regular grids are simulated
exactly through their linear state-space representation, which keeps the
cost linear in the number of quadrature nodes.  Other kernels fall back to a
dense Cholesky factor.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .stochastic import (CovKernel, KernelFamily, MvnSpec, RngStream,
                         chol_with_jitter, gram, mvn_sample)
from .warping import BernoulliThreshold, Warp

__all__ = [
    "TemporalModel",
    "SensorScene",
    "Realization",
    "PathSampler",
    "sample_spatial",
    "sample_point_obs",
    "sample_integral_obs",
    "realize",
    "export_realization_csv",
]

# sub-stream tags used by ``realize``
SPATIAL_STREAM, POINT_STREAM, INTEGRAL_STREAM = 0, 1, 2


@dataclass(frozen=True)
class TemporalModel:
    """Temporal hypothesis: unit-variance kernel on ``[0, T]`` plus a warp."""

    kernel: CovKernel
    warp: Warp

    def __post_init__(self):
        if abs(self.kernel.scale - 1.0) > 1e-12:
            raise ValueError("temporal kernels must have unit marginal variance")

    def to_dict(self):
        return {"kernel": self.kernel.to_dict(), "warp": self.warp.to_dict()}


class PathSampler:
    """Draws latent paths of a stationary kernel on ``n_nodes`` equally
    spaced times ``0, dt, 2 dt, ...``.

    Noise enters as standard normals of shape ``(batch, n_nodes, noise_dim)``.
    The state-space recursion is written with elementwise operations only,
    so each row of the output depends on its own row of noise alone and is
    bit-identical whatever the batch composition.
    """

    def __init__(self, kernel: CovKernel, n_nodes: int, dt: float):
        self.kernel = kernel
        self.n_nodes = int(n_nodes)
        self.dt = float(dt)
        fam = kernel.family
        if fam is KernelFamily.Matern12:
            a = np.exp(-dt / kernel.length_scale)
            self.A = np.array([[a]])
            self.S = np.array([[kernel.scale * np.sqrt(1.0 - a * a)]])
            self.S0 = np.array([[kernel.scale]])
            self.method = "statespace"
        elif fam is KernelFamily.Matern52:
            lam = np.sqrt(5.0) / kernel.length_scale
            F = np.array([[0.0, 1.0, 0.0],
                          [0.0, 0.0, 1.0],
                          [-lam ** 3, -3.0 * lam ** 2, -3.0 * lam]])
            kap = lam * lam / 3.0
            Pinf = kernel.variance * np.array([[1.0, 0.0, -kap],
                                               [0.0, kap, 0.0],
                                               [-kap, 0.0, lam ** 4]])
            A = linalg.expm(F * dt)
            Qd = Pinf - A @ Pinf @ A.T
            Qd = 0.5 * (Qd + Qd.T)
            evals, evecs = np.linalg.eigh(Qd)
            self.A = A
            self.S = evecs * np.sqrt(np.clip(evals, 0.0, None))
            self.S0 = np.linalg.cholesky(Pinf)
            self.method = "statespace"
        else:
            times = np.arange(self.n_nodes) * dt
            self.L, _ = chol_with_jitter(gram(kernel, times))
            self.method = "cholesky"

    @property
    def noise_dim(self) -> int:
        return self.A.shape[0] if self.method == "statespace" else 1

    @staticmethod
    def _affine(M, x, out=None):
        # out_i = sum_j M_ij x_j, elementwise over the batch axis
        d = M.shape[0]
        cols = []
        for i in range(d):
            acc = M[i, 0] * x[0]
            for j in range(1, d):
                acc = acc + M[i, j] * x[j]
            cols.append(acc)
        return cols

    def _states(self, noise):
        """Yield the latent value at each node; ``noise(k)`` returns the
        ``(batch, noise_dim)`` standard normals for node ``k``."""
        xi = noise(0)
        x = self._affine(self.S0, [xi[:, j] for j in range(xi.shape[1])])
        yield x[0]
        for k in range(1, self.n_nodes):
            xi = noise(k)
            ax = self._affine(self.A, x)
            sx = self._affine(self.S, [xi[:, j] for j in range(xi.shape[1])])
            x = [ax[i] + sx[i] for i in range(len(ax))]
            yield x[0]

    def paths(self, xi: np.ndarray) -> np.ndarray:
        """Map noise of shape ``(batch, n_nodes, noise_dim)`` to paths."""
        xi = np.asarray(xi, dtype=float)
        if self.method == "cholesky":
            return np.stack([self.L @ row[:, 0] for row in xi])
        out = np.empty(xi.shape[:2])
        for k, f in enumerate(self._states(lambda k: xi[:, k, :])):
            out[:, k] = f
        return out

    def warped_integrals(self, warp: Warp, K: int, Q: int, noise,
                         batch: int) -> np.ndarray:
        """Trapezoid integrals of ``warp(f)`` over ``K`` blocks of ``Q``
        sub-steps each, streaming over nodes.

        ``noise`` is either an array ``(batch, n_nodes, noise_dim)`` or a
        callable ``k -> (batch, noise_dim)``.
        """
        if self.n_nodes != K * Q + 1:
            raise ValueError("sampler grid does not match K * Q + 1 nodes")
        if not callable(noise):
            arr = np.asarray(noise, dtype=float)
            noise = lambda k: arr[:, k, :]  # noqa: E731
        h = self.dt
        acc = np.zeros((batch, K))
        if self.method == "cholesky":
            xi = np.stack([noise(k)[:, 0] for k in range(self.n_nodes)], axis=1)
            values = warp.forward(xi @ self.L.T)
            for k in range(self.n_nodes):
                self._accumulate(acc, k, values[:, k], K, Q, h)
            return acc
        for k, f in enumerate(self._states(noise)):
            self._accumulate(acc, k, warp.forward(f), K, Q, h)
        return acc

    @staticmethod
    def _accumulate(acc, k, w, K, Q, h):
        j, p = divmod(k, Q)
        if p == 0:
            if j > 0:
                acc[:, j - 1] += 0.5 * h * w
            if j < K:
                acc[:, j] += 0.5 * h * w
        else:
            acc[:, j] += h * w


def _unique_locations(grid, extra):
    """Stack grid and sensor points, merging exact duplicates."""
    allpts = np.vstack([grid, extra]) if len(extra) else grid
    uniq, inverse = np.unique(allpts, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    return uniq, inverse[:len(grid)], inverse[len(grid):]


@dataclass
class SensorScene:
    grid: np.ndarray
    p_sensors: np.ndarray
    i_sensors: np.ndarray
    spatial_kernel: CovKernel
    spatial_mean: float
    threshold: BernoulliThreshold
    h0: TemporalModel
    h1: TemporalModel
    T: float
    M: int
    K: int
    sigma_p: float
    sigma_i: float
    substeps: int = 50
    _samplers: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.grid = np.atleast_2d(np.asarray(self.grid, dtype=float))
        self.p_sensors = np.asarray(self.p_sensors, dtype=float).reshape(-1, 2)
        self.i_sensors = np.asarray(self.i_sensors, dtype=float).reshape(-1, 2)
        if self.n_sensors < 1:
            raise ValueError("scene needs at least one sensor")
        if self.M < 1 or self.K < 1 or self.T <= 0:
            raise ValueError("need M >= 1, K >= 1 and T > 0")
        if self.sigma_p <= 0 or self.sigma_i <= 0:
            raise ValueError("noise standard deviations must be positive")
        if self.substeps < 2:
            raise ValueError("need at least two quadrature sub-steps")

    @property
    def n_p(self) -> int:
        return len(self.p_sensors)

    @property
    def n_i(self) -> int:
        return len(self.i_sensors)

    @property
    def n_sensors(self) -> int:
        return self.n_p + self.n_i

    @property
    def sensors(self) -> np.ndarray:
        """All sensor locations, point sensors first."""
        return np.vstack([self.p_sensors, self.i_sensors])

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M)

    def model(self, label: int) -> TemporalModel:
        return self.h1 if label else self.h0

    @cached_property
    def _layout(self):
        return _unique_locations(self.grid, self.sensors)

    @property
    def locations(self) -> np.ndarray:
        return self._layout[0]

    @property
    def grid_index(self) -> np.ndarray:
        return self._layout[1]

    @property
    def sensor_index(self) -> np.ndarray:
        return self._layout[2]

    @cached_property
    def spatial_law(self) -> MvnSpec:
        cov = gram(self.spatial_kernel, self.locations)
        return MvnSpec.from_cov(np.full(len(cov), self.spatial_mean), cov)

    @cached_property
    def heldout_mask(self) -> np.ndarray:
        """Grid points that do not coincide with any sensor."""
        mask = np.ones(len(self.grid), dtype=bool)
        taken = set(self.sensor_index.tolist())
        for n, idx in enumerate(self.grid_index):
            if idx in taken:
                mask[n] = False
        return mask

    def point_cholesky(self, label: int) -> np.ndarray:
        key = ("point", label)
        if key not in self._samplers:
            K = gram(self.model(label).kernel, self.times)
            self._samplers[key] = chol_with_jitter(K)[0]
        return self._samplers[key]

    def integral_sampler(self, label: int) -> PathSampler:
        key = ("integral", label)
        if key not in self._samplers:
            self._samplers[key] = integral_sampler(
                self.model(label), self.K, self.T, self.substeps)
        return self._samplers[key]

    def replace(self, **changes) -> "SensorScene":
        fields = {k: getattr(self, k) for k in (
            "grid", "p_sensors", "i_sensors", "spatial_kernel",
            "spatial_mean", "threshold", "h0", "h1", "T", "M", "K",
            "sigma_p", "sigma_i", "substeps")}
        fields.update(changes)
        return SensorScene(**fields)


@dataclass
class Realization:
    g_values: np.ndarray        # latent field at scene.locations
    y_values: np.ndarray
    point_obs: np.ndarray       # (n_p, M)
    integral_obs: np.ndarray    # (n_i, K)
    scene: SensorScene = field(repr=False)

    @property
    def g_grid(self):
        return self.g_values[self.scene.grid_index]

    @property
    def y_grid(self):
        return self.y_values[self.scene.grid_index]

    @property
    def g_sensors(self):
        return self.g_values[self.scene.sensor_index]

    @property
    def y_sensors(self):
        return self.y_values[self.scene.sensor_index]


def integral_sampler(model: TemporalModel, K: int, T: float, Q: int):
    return PathSampler(model.kernel, K * Q + 1, T / (K * Q))


def sample_spatial(scene: SensorScene, rng):
    """One joint draw of ``g`` over ``scene.locations`` and its labels."""
    g = mvn_sample(scene.spatial_law, rng)
    return g, scene.threshold.apply(g)


def _generator(rng):
    return rng.generator() if isinstance(rng, RngStream) else rng


def sample_point_obs(model: TemporalModel, times, sigma_p: float, rng,
                     size: int | None = None, chol=None) -> np.ndarray:
    """Noisy point observations ``W(f(t_m)) + eps``.

    Returns one ``(M,)`` vector, or ``(size, M)`` when ``size`` is given.
    """
    gen = _generator(rng)
    times = np.asarray(times, dtype=float)
    L = chol if chol is not None else chol_with_jitter(gram(model.kernel, times))[0]
    M = len(times)
    if size is None:
        xi = gen.standard_normal(M)
        eps = gen.standard_normal(M)
        return model.warp.forward(L @ xi) + sigma_p * eps
    xi = gen.standard_normal((size, M))
    eps = gen.standard_normal((size, M))
    return model.warp.forward(xi @ L.T) + sigma_p * eps


def sample_integral_obs(model: TemporalModel, K: int, T: float,
                        sigma_i: float, Q: int, rng, size: int | None = None,
                        sampler: PathSampler | None = None,
                        chunk: int = 2048) -> np.ndarray:
    """Noisy integral observations over ``K`` equal intervals of ``[0, T]``.

    Each integral is a trapezoid rule on ``Q + 1`` nodes of one joint latent
    path.  Returns ``(K,)`` or ``(size, K)``.
    """
    if K < 1 or Q < 2:
        raise ValueError("need K >= 1 and Q >= 2")
    gen = _generator(rng)
    sampler = sampler or integral_sampler(model, K, T, Q)
    d = sampler.noise_dim
    if size is None:
        xi = gen.standard_normal((1, sampler.n_nodes, d))
        eps = gen.standard_normal(K)
        return sampler.warped_integrals(model.warp, K, Q, xi, 1)[0] + sigma_i * eps
    out = np.empty((size, K))
    for start in range(0, size, chunk):
        b = min(chunk, size - start)
        vals = sampler.warped_integrals(
            model.warp, K, Q, lambda k: gen.standard_normal((b, d)), b)
        out[start:start + b] = vals + sigma_i * gen.standard_normal((b, K))
    return out


def realize(scene: SensorScene, rng: RngStream) -> Realization:
    """Spatial draw, then label-conditional temporal draws per sensor.

    Every sensor owns the sub-stream ``rng.spawn(kind, n)``; processing
    order therefore never changes any sensor's observations.
    """
    g, y = sample_spatial(scene, rng.spawn(SPATIAL_STREAM))
    labels = y[scene.sensor_index]
    lp, li = labels[:scene.n_p], labels[scene.n_p:]

    M = scene.M
    point_obs = np.empty((scene.n_p, M))
    for n in range(scene.n_p):
        gen = rng.spawn(POINT_STREAM, n).generator()
        L = scene.point_cholesky(int(lp[n]))
        xi = gen.standard_normal(M)
        eps = gen.standard_normal(M)
        point_obs[n] = (scene.model(int(lp[n])).warp.forward(L @ xi)
                        + scene.sigma_p * eps)

    K, Q = scene.K, scene.substeps
    integral_obs = np.empty((scene.n_i, K))
    for label in (0, 1):
        members = np.flatnonzero(li == label)
        if len(members) == 0:
            continue
        sampler = scene.integral_sampler(label)
        xis, epss = [], []
        for n in members:
            gen = rng.spawn(INTEGRAL_STREAM, int(n)).generator()
            xis.append(gen.standard_normal((sampler.n_nodes, sampler.noise_dim)))
            epss.append(gen.standard_normal(K))
        vals = sampler.warped_integrals(scene.model(label).warp, K, Q,
                                        np.stack(xis), len(members))
        integral_obs[members] = vals + scene.sigma_i * np.stack(epss)
    return Realization(g, y, point_obs, integral_obs, scene)


def _fmt(x) -> str:
    return format(float(x), ".9g")


def export_realization_csv(real: Realization, out_dir: str,
                           prefix: str = "") -> list[str]:
    """Write the latent/binary field and both observation blocks as CSV."""
    os.makedirs(out_dir, exist_ok=True)
    scene = real.scene
    paths = []
    p = os.path.join(out_dir, f"{prefix}realization.csv")
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "g", "label"])
        for loc, g, lab in zip(scene.locations, real.g_values, real.y_values):
            w.writerow([_fmt(loc[0]), _fmt(loc[1]), _fmt(g), int(lab)])
    paths.append(p)
    for name, block, locs in (("point_obs", real.point_obs, scene.p_sensors),
                              ("integral_obs", real.integral_obs,
                               scene.i_sensors)):
        p = os.path.join(out_dir, f"{prefix}{name}.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sensor_id", "x", "y"]
                       + [f"obs_{k}" for k in range(block.shape[1])])
            for n, (row, loc) in enumerate(zip(block, locs)):
                w.writerow([n, _fmt(loc[0]), _fmt(loc[1])]
                           + [_fmt(v) for v in row])
        paths.append(p)
    return paths
