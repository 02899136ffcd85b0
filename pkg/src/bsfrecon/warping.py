"""
Strictly increasing warping functions ``W = F^{-1} o Phi``.

Every warp maps a standard-normal latent value ``z`` to an observation
``v = W(z)`` whose marginal CDF is ``F``.  The inverse ``G = Phi^{-1} o F``
and the log-Jacobian ``log dG/dv`` are what the copula density of a warped
Gaussian process needs; :meth:`Warp.derivatives` also returns the first two
derivatives of ``G`` and of ``log dG/dv`` so that Laplace fits can use exact
gradients and Hessians.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

__all__ = [
    "DomainError",
    "Warp",
    "IdentityWarp",
    "GammaWarp",
    "TukeyGHWarp",
    "BernoulliThreshold",
    "warp_from_dict",
    "warp_forward",
    "warp_inverse",
    "warp_log_dG",
]

PROB_CLAMP = 1e-16
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_clamp_warned = False


class DomainError(ValueError):
    """A value lies outside the range of the warping function."""


def _warn_clamp():
    global _clamp_warned
    if not _clamp_warned:
        warnings.warn("normal CDF saturated; probabilities clamped to "
                      f"[{PROB_CLAMP:g}, 1 - {PROB_CLAMP:g}]", RuntimeWarning,
                      stacklevel=3)
        _clamp_warned = True


def _tail_probability(z):
    """``Phi(-|z|)`` clamped away from zero."""
    p = special.ndtr(-np.abs(z))
    if np.any(p < PROB_CLAMP):
        _warn_clamp()
        p = np.maximum(p, PROB_CLAMP)
    return p


class Warp:
    """Base class; subclasses implement the four primitive maps."""

    family = "abstract"

    @property
    def range(self) -> tuple[float, float]:
        return (-np.inf, np.inf)

    def in_range(self, v) -> np.ndarray:
        lo, hi = self.range
        v = np.asarray(v, dtype=float)
        return np.isfinite(v) & (v > lo) & (v < hi)

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if not np.all(self.in_range(v)):
            lo, hi = self.range
            raise DomainError(
                f"{self.family} warp: value outside open range ({lo}, {hi})")
        return v

    def forward(self, z):
        raise NotImplementedError

    def inverse(self, v):
        raise NotImplementedError

    def log_dG(self, v):
        raise NotImplementedError

    def derivatives(self, v):
        """Return ``(G, dG, d2G, dlogdG, d2logdG)`` evaluated at ``v``."""
        raise NotImplementedError

    def cdf(self, v):
        """Marginal CDF ``F(v) = Phi(G(v))`` of the warped variable."""
        v = np.asarray(v, dtype=float)
        lo, hi = self.range
        out = np.where(v >= hi, 1.0, 0.0)
        inside = self.in_range(v)
        if np.any(inside):
            out = np.where(inside, special.ndtr(
                self.inverse(np.where(inside, v, self.median()))), out)
        return out

    def median(self) -> float:
        return float(self.forward(0.0))

    def to_dict(self) -> dict:
        raise NotImplementedError


class IdentityWarp(Warp):
    family = "Identity"

    def forward(self, z):
        return np.asarray(z, dtype=float) if np.ndim(z) else float(z)

    def inverse(self, v):
        v = self._check(v)
        return v if v.ndim else float(v)

    def log_dG(self, v):
        v = self._check(v)
        return np.zeros_like(v) if v.ndim else 0.0

    def derivatives(self, v):
        v = self._check(v)
        zero = np.zeros_like(v)
        return v.copy(), np.ones_like(v), zero, zero, zero

    def to_dict(self):
        return {"family": "Identity"}

    def __repr__(self):
        return "IdentityWarp()"

    def __eq__(self, other):
        return isinstance(other, IdentityWarp)

    def __hash__(self):
        return hash("Identity")


@dataclass(frozen=True, eq=True)
class GammaWarp(Warp):
    """Gamma(shape ``a``, scale ``b``) marginal, optionally followed by an
    affine map ``v = offset + factor * x``.

    A negative ``factor`` would make the composite decreasing; the latent
    argument is then negated so that ``W`` stays increasing.  For a
    zero-mean Gaussian process ``f`` and ``-f`` have the same law, so the
    warped process is unchanged.
    """

    a: float
    b: float
    offset: float = 0.0
    factor: float = 1.0

    family = "Gamma"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("Gamma shape and scale must be positive")
        if self.factor == 0 or not np.isfinite(self.factor):
            raise ValueError("affine factor must be finite and nonzero")

    @property
    def _sign(self) -> float:
        return 1.0 if self.factor > 0 else -1.0

    @property
    def range(self):
        if self.factor > 0:
            return (self.offset, np.inf)
        return (-np.inf, self.offset)

    def _raw_quantile(self, z):
        # Gamma quantile at Phi(z), using the upper tail for z > 0
        p = _tail_probability(z)
        lower = self.b * special.gammaincinv(self.a, p)
        upper = self.b * special.gammainccinv(self.a, p)
        return np.where(z > 0, upper, lower)

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        out = self.offset + self.factor * self._raw_quantile(self._sign * z)
        return out if out.ndim else float(out)

    def _raw(self, v):
        return (v - self.offset) / self.factor

    def _latent(self, x):
        # Phi^{-1}(F(x)) using whichever tail keeps precision
        lower = special.gammainc(self.a, x / self.b)
        upper = special.gammaincc(self.a, x / self.b)
        return np.where(lower < 0.5, special.ndtri(lower), -special.ndtri(upper))

    def inverse(self, v):
        v = self._check(v)
        out = self._sign * self._latent(self._raw(v))
        return out if out.ndim else float(out)

    def _log_density(self, x):
        return ((self.a - 1.0) * np.log(x) - x / self.b
                - special.gammaln(self.a) - self.a * np.log(self.b))

    def log_dG(self, v):
        v = self._check(v)
        x = self._raw(v)
        u = self._latent(x)
        out = (self._log_density(x) - np.log(abs(self.factor))
               + 0.5 * u * u + _HALF_LOG_2PI)
        return out if out.ndim else float(out)

    def derivatives(self, v):
        v = self._check(v)
        x = self._raw(v)
        u_raw = self._latent(x)
        ell = (self._log_density(x) - np.log(abs(self.factor))
               + 0.5 * u_raw ** 2 + _HALF_LOG_2PI)
        d1 = np.exp(ell)
        G = self._sign * u_raw
        dlogf = (self.a - 1.0) / x - 1.0 / self.b
        d2logf = -(self.a - 1.0) / (x * x)
        # chain rule through x = (v - offset) / factor
        dell = dlogf / self.factor + G * d1
        d2 = d1 * dell
        d2ell = d2logf / self.factor ** 2 + d1 * d1 + G * d2
        return G, d1, d2, dell, d2ell

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        x = self._raw(v)
        F = stats.gamma.cdf(x, self.a, scale=self.b)
        return F if self.factor > 0 else 1.0 - F

    def to_dict(self):
        return {"family": "Gamma", "a": self.a, "b": self.b,
                "offset": self.offset, "factor": self.factor}


@dataclass(frozen=True, eq=True)
class TukeyGHWarp(Warp):
    """Tukey g-and-h warp ``tau(z) = l + s * (exp(g z) - 1) / g * exp(h z**2 / 2)``.

    ``tau`` is already the quantile-of-Phi map, so ``W = tau`` directly.
    The default is Tukey's standard form with ``h z**2 / 2`` in the tail
    factor; ``half_h=False`` switches to ``exp(h z**2)``.
    """

    g: float
    h: float
    loc: float = 0.0
    scale: float = 1.0
    half_h: bool = True

    family = "TukeyGH"

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("Tukey h must be nonnegative")
        if self.scale <= 0:
            raise ValueError("Tukey scale must be positive")

    @property
    def range(self):
        if self.h > 0 or self.g == 0:
            return (-np.inf, np.inf)
        edge = self.loc - self.scale / self.g
        return (edge, np.inf) if self.g > 0 else (-np.inf, edge)

    def _a(self, z, order):
        g = self.g
        if g == 0:
            return [z, np.ones_like(z), np.zeros_like(z), np.zeros_like(z)][order]
        if order == 0:
            return np.expm1(g * z) / g
        return g ** (order - 1) * np.exp(g * z)

    def _b(self, z, order):
        h = 0.5 * self.h if self.half_h else self.h
        H = np.exp(h * z * z)
        if order == 0:
            return H
        if order == 1:
            return 2.0 * h * z * H
        if order == 2:
            return (2.0 * h + 4.0 * h * h * z * z) * H
        return (12.0 * h * h * z + 8.0 * h ** 3 * z ** 3) * H

    def tau(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            return self.loc + self.scale * self._a(z, 0) * self._b(z, 0)

    def tau_derivatives(self, z):
        """First three derivatives of ``tau`` at ``z``."""
        z = np.asarray(z, dtype=float)
        a = [self._a(z, k) for k in range(4)]
        b = [self._b(z, k) for k in range(4)]
        s = self.scale
        d1 = s * (a[1] * b[0] + a[0] * b[1])
        d2 = s * (a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2])
        d3 = s * (a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2]
                  + a[0] * b[3])
        return d1, d2, d3

    def forward(self, z):
        out = self.tau(z)
        return out if out.ndim else float(out)

    def _solve(self, v, tol=1e-14, max_iter=200):
        """Safeguarded Newton for ``tau(z) = v`` inside a growing bracket."""
        v = np.asarray(v, dtype=float)
        flat = v.ravel()
        lo = np.full(flat.shape, -1.0)
        hi = np.full(flat.shape, 1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(64):
                need = self.tau(lo) > flat
                if not need.any():
                    break
                lo = np.where(need, 2.0 * lo, lo)
            for _ in range(64):
                need = self.tau(hi) < flat
                if not need.any():
                    break
                hi = np.where(need, 2.0 * hi, hi)
            z = np.clip(np.zeros_like(flat), lo, hi)
            for _ in range(max_iter):
                f = self.tau(z) - flat
                lo = np.where(f < 0, z, lo)
                hi = np.where(f > 0, z, hi)
                d1 = self.tau_derivatives(z)[0]
                step = f / d1
                z_new = z - step
                bad = ~np.isfinite(z_new) | (z_new <= lo) | (z_new >= hi)
                z_new = np.where(bad, 0.5 * (lo + hi), z_new)
                done = np.abs(z_new - z) <= tol * np.maximum(1.0, np.abs(z))
                z = z_new
                if done.all():
                    break
        return z.reshape(v.shape)

    def inverse(self, v):
        v = self._check(v)
        out = self._solve(v)
        return out if out.ndim else float(out)

    def log_dG(self, v):
        z = np.asarray(self.inverse(v))
        out = -np.log(self.tau_derivatives(z)[0])
        return out if out.ndim else float(out)

    def derivatives(self, v):
        z = np.asarray(self.inverse(v), dtype=float)
        t1, t2, t3 = self.tau_derivatives(z)
        d1 = 1.0 / t1
        d2 = -t2 * d1 ** 3
        dell = -t2 * d1 * d1
        d2ell = d1 * (-t3 * d1 * d1 + 2.0 * t2 * t2 * d1 ** 3)
        return z, d1, d2, dell, d2ell

    def to_dict(self):
        return {"family": "TukeyGH", "g": self.g, "h": self.h,
                "loc": self.loc, "scale": self.scale, "half_h": self.half_h}


def warp_from_dict(d: dict) -> Warp:
    fam = d.get("family")
    skip = ("family", "post_map", "half_h")
    params = {k: float(v) for k, v in d.items() if k not in skip}
    if fam == "Identity":
        return IdentityWarp()
    if fam == "Gamma":
        if "post_map" in d:
            pm = d["post_map"]
            params["offset"], params["factor"] = float(pm[0]), float(pm[1])
        return GammaWarp(**params)
    if fam == "TukeyGH":
        return TukeyGHWarp(**params, half_h=bool(d.get("half_h", True)))
    raise ValueError(f"unknown warp family {fam!r}")


def warp_forward(w: Warp, z):
    return w.forward(z)


def warp_inverse(w: Warp, v):
    return w.inverse(v)


def warp_log_dG(w: Warp, v):
    return w.log_dG(v)


@dataclass(frozen=True)
class BernoulliThreshold:
    """Indicator warp ``y = 1{g >= c}``; ``pi = 1 - Phi(c)`` for a standard
    normal latent field."""

    c: float

    @classmethod
    def from_probability(cls, pi: float) -> "BernoulliThreshold":
        if not 0.0 < pi < 1.0:
            raise ValueError("pi must lie in (0, 1)")
        return cls(float(special.ndtri(1.0 - pi)))

    @property
    def pi(self) -> float:
        return float(special.ndtr(-self.c))

    def apply(self, g):
        return (np.asarray(g) >= self.c).astype(np.int8)
