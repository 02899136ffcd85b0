"""
Covariance kernels, multivariate normal helpers and reproducible random
streams shared by every other module.

Kernels are stationary and isotropic: a kernel value depends on two points
only through their Euclidean distance ``r``.

* ``SquaredExponential``: ``s**2 * exp(-r**2 / (2 l**2))``
* ``Matern12``: ``s**2 * exp(-r / l)``
* ``Matern52``: ``s**2 * (1 + sqrt(5) r / l + 5 r**2 / (3 l**2)) * exp(-sqrt(5) r / l)``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "KernelFamily",
    "CovKernel",
    "MvnSpec",
    "RngStream",
    "NotPositiveDefinite",
    "JITTER_LADDER",
    "kernel_eval",
    "gram",
    "cross_gram",
    "chol_with_jitter",
    "mvn_sample",
    "mvn_logpdf",
]

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

_LOG_2PI = np.log(2.0 * np.pi)
_SQRT5 = np.sqrt(5.0)


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a matrix stays indefinite after the largest jitter."""


class KernelFamily(str, enum.Enum):
    SquaredExponential = "SquaredExponential"
    Matern12 = "Matern12"
    Matern52 = "Matern52"


@dataclass(frozen=True)
class CovKernel:
    family: KernelFamily
    scale: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError(f"kernel scale must be positive, got {self.scale}")
        if not (self.length_scale > 0 and np.isfinite(self.length_scale)):
            raise ValueError(
                f"kernel length_scale must be positive, got {self.length_scale}")

    @property
    def variance(self) -> float:
        return self.scale ** 2

    def of_distance(self, r):
        """Kernel value as a function of distance (array-friendly)."""
        r = np.abs(np.asarray(r, dtype=float))
        s2, ell = self.scale ** 2, self.length_scale
        if self.family is KernelFamily.SquaredExponential:
            return s2 * np.exp(-0.5 * (r / ell) ** 2)
        if self.family is KernelFamily.Matern12:
            return s2 * np.exp(-r / ell)
        u = _SQRT5 * r / ell
        return s2 * (1.0 + u + u * u / 3.0) * np.exp(-u)

    def __call__(self, x, y):
        return kernel_eval(self, x, y)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "scale": self.scale,
                "length_scale": self.length_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "CovKernel":
        return cls(KernelFamily(d["family"]), float(d.get("scale", 1.0)),
                   float(d["length_scale"]))


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x[:, None]
    return x


def _pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def kernel_eval(k: CovKernel, x, y) -> float:
    """Evaluate ``k(x, y)`` for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r = np.sqrt(np.sum((x - y) ** 2))
    return float(k.of_distance(r))


def gram(k: CovKernel, points) -> np.ndarray:
    """Symmetric Gram matrix of ``k`` over ``points``.

    ``points`` is either a 1-D array of scalars (e.g. time stamps) or an
    ``(m, d)`` array of locations.
    """
    p = _as_points(points)
    if p.shape[0] == 0:
        raise ValueError("gram needs at least one point")
    K = k.of_distance(_pairwise_distance(p, p))
    # exact symmetry regardless of rounding in the distance computation
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, k.variance)
    return K


def cross_gram(k: CovKernel, a, b) -> np.ndarray:
    """Rectangular matrix ``K[i, j] = k(a_i, b_j)``."""
    return k.of_distance(_pairwise_distance(_as_points(a), _as_points(b)))


def chol_with_jitter(A, ladder=JITTER_LADDER):
    """Lower Cholesky factor of ``A + jitter * I``.

    The jitter climbs through ``ladder`` until the factorisation succeeds.

    Returns
    -------
    L : ndarray
        Lower-triangular factor.
    jitter : float
        The jitter that was actually added.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("chol_with_jitter expects a square matrix")
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    eye = np.eye(A.shape[0])
    for jitter in ladder:
        try:
            L = linalg.cholesky(A + jitter * eye if jitter else A,
                                lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.diag(L) > 0):
            return L, float(jitter)
    raise NotPositiveDefinite(
        f"matrix of size {A.shape[0]} not positive definite with jitter "
        f"up to {ladder[-1]:g}")


@dataclass(frozen=True)
class MvnSpec:
    """Multivariate normal law stored through its lower Cholesky factor."""

    mean: np.ndarray
    chol_lower: np.ndarray
    jitter_used: float = 0.0

    @classmethod
    def from_cov(cls, mean, cov, ladder=JITTER_LADDER) -> "MvnSpec":
        cov = np.asarray(cov, dtype=float)
        mean = np.broadcast_to(np.asarray(mean, dtype=float),
                               (cov.shape[0],)).copy()
        L, jitter = chol_with_jitter(cov, ladder)
        return cls(mean, L, jitter)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def cov(self) -> np.ndarray:
        return self.chol_lower @ self.chol_lower.T


def mvn_sample(spec: MvnSpec, rng, size=None) -> np.ndarray:
    """Draw ``mean + L z`` with ``z`` i.i.d. standard normal.

    ``size=None`` returns one vector; an integer returns ``(size, dim)``.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if size is None:
        z = gen.standard_normal(spec.dim)
        return spec.mean + spec.chol_lower @ z
    z = gen.standard_normal((size, spec.dim))
    return spec.mean + z @ spec.chol_lower.T


def mvn_logpdf(spec: MvnSpec, x) -> np.ndarray | float:
    """Exact Gaussian log-density evaluated with the stored factor.

    ``x`` may be a single vector or an ``(n, dim)`` batch.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise ValueError(
            f"dimension mismatch: got {x.shape[-1]}, expected {spec.dim}")
    resid = (x - spec.mean).T
    alpha = linalg.solve_triangular(spec.chol_lower, resid, lower=True,
                                    check_finite=False)
    maha = np.sum(alpha * alpha, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(spec.chol_lower)))
    out = -0.5 * (maha + logdet + spec.dim * _LOG_2PI)
    return float(out) if x.ndim == 1 else out


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with the same key produce the same draws; sub-streams derived
    with :meth:`spawn` are statistically independent of their parent and of
    each other.
    """

    seed: int
    stream_id: int = 0
    path: tuple = field(default=())

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            int(self.seed), spawn_key=(int(self.stream_id),) + tuple(self.path))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def spawn(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id,
                         self.path + tuple(int(k) for k in keys))
