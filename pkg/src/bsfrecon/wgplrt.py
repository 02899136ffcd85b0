"""
Likelihood-ratio test for point sensors observing a warped GP.

For a warp ``W = F^{-1} o Phi`` with inverse ``G``, the density of the
noise-free observations ``v`` under one hypothesis is ``exp(Q(v))`` times a
constant, where

    Q(v) = -1/2 G(v)^T K^{-1} G(v) + sum_m log G'(v_m).

Adding Gaussian noise of variance ``sigma**2`` makes the marginal
likelihood an intractable convolution.  A second-order expansion of ``Q``
around its maximiser ``v_hat`` (negative Hessian ``A``) turns it into a
Gaussian integral:

    log p(Z) ~ log C - 1/2 (Z - v_hat)^T (A^{-1} + sigma^2 I)^{-1} (Z - v_hat)
    log C    = -1/2 log|K| - M log(sigma) - M/2 log(2 pi) + Q(v_hat)
               - 1/2 log|A + sigma^{-2} I|.

Everything is evaluated through the factorisation

    A = D L (I + L^T F L) L^T D,   K = L L^T,   D = diag(G'),

with ``F`` diagonal, which keeps the computation exact (to rounding) when
the warp is the identity and avoids inverting ``A`` explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .field import TemporalModel
from .stochastic import (CovKernel, RngStream, chol_with_jitter, gram)
from .warping import DomainError, warp_from_dict

__all__ = [
    "NonConvergence",
    "LaplaceCache",
    "q_function",
    "q_gradient_hessian",
    "laplace_fit",
    "approx_log_likelihood",
    "wgplrt_statistic",
    "wgplrt_decide",
]

_LOG_2PI = np.log(2.0 * np.pi)

GRAD_TOL = 1e-6
MAX_ITER = 200
N_RESTARTS = 5
ARMIJO_C = 1e-4
BACKTRACK = 0.5


class NonConvergence(RuntimeError):
    """Newton ascent on Q failed from every start point."""


def _kernel_factor(K_gram):
    K_gram = np.asarray(K_gram, dtype=float)
    L, _ = chol_with_jitter(K_gram)
    return L


def _check_domain(model: TemporalModel, v):
    v = np.asarray(v, dtype=float)
    if not np.all(model.warp.in_range(v)):
        raise DomainError("some entries of v lie outside range(W)")
    return v


def q_function(model: TemporalModel, K_gram, v, chol=None) -> float:
    """``-1/2 G(v)^T K^{-1} G(v) + sum log G'(v)``.

    ``chol`` may supply the lower Cholesky factor of ``K_gram``.
    """
    v = _check_domain(model, np.atleast_1d(v))
    L = chol if chol is not None else _kernel_factor(K_gram)
    u = model.warp.inverse(v)
    a = linalg.solve_triangular(L, u, lower=True, check_finite=False)
    return float(-0.5 * a @ a + np.sum(model.warp.log_dG(v)))


@dataclass
class _Local:
    """Q and its derivatives at one point, plus the pieces of the Hessian."""

    q: float
    grad: np.ndarray
    dG: np.ndarray
    F: np.ndarray       # diagonal curvature correction, scaled by 1 / G'^2

    def hessian(self, Kinv):
        """Negative Hessian ``A = D K^{-1} D + diag(F G'^2)``."""
        D = self.dG
        A = D[:, None] * Kinv * D[None, :] + np.diag(self.F * D * D)
        return 0.5 * (A + A.T)


def _local(model, L, v) -> _Local:
    G, dG, d2G, dell, d2ell = model.warp.derivatives(v)
    w = linalg.cho_solve((L, True), G, check_finite=False)
    q = -0.5 * G @ w + np.sum(np.log(dG))
    grad = -dG * w + dell
    F = (d2G * w - d2ell) / (dG * dG)
    return _Local(float(q), grad, dG, F)


def q_gradient_hessian(model: TemporalModel, K_gram, v):
    """Value, gradient and Hessian of Q at ``v`` (analytic)."""
    v = _check_domain(model, np.atleast_1d(v))
    L = _kernel_factor(K_gram)
    loc = _local(model, L, v)
    Kinv = linalg.cho_solve((L, True), np.eye(len(v)), check_finite=False)
    return loc.q, loc.grad, -loc.hessian(Kinv)


def _inner_matrix(L, F):
    """``B = I + L^T F L`` (symmetric)."""
    B = np.eye(len(F)) + (L.T * F) @ L
    return 0.5 * (B + B.T)


def _newton_direction(L, loc: _Local):
    """Ascent direction ``A^{-1} grad`` with ``B`` shifted until it is PD.

    Returns ``(direction, shift)``.
    """
    B = _inner_matrix(L, loc.F)
    eye = np.eye(len(B))
    shift = 0.0
    lam = 1e-8
    while True:
        try:
            R = linalg.cholesky(B + shift * eye, lower=True, check_finite=False)
            break
        except linalg.LinAlgError:
            shift = lam
            lam *= 2.0
            if lam > 1e12:
                raise NonConvergence("could not regularise the Newton system")
    r = L.T @ (loc.grad / loc.dG)
    r = linalg.cho_solve((R, True), r, check_finite=False)
    return (L @ r) / loc.dG, shift


def _ascend(model, L, v0):
    v = v0.copy()
    loc = _local(model, L, v)
    for it in range(MAX_ITER + 1):
        if np.max(np.abs(loc.grad)) <= GRAD_TOL:
            return v, loc, it
        if it == MAX_ITER:
            break
        step, _ = _newton_direction(L, loc)
        slope = float(loc.grad @ step)
        t = 1.0
        accepted = False
        while t > 1e-14:
            cand = v + t * step
            if np.all(model.warp.in_range(cand)):
                try:
                    trial = _local(model, L, cand)
                except DomainError:
                    trial = None
                if (trial is not None and np.isfinite(trial.q)
                        and trial.q >= loc.q + ARMIJO_C * t * slope):
                    accepted = True
                    break
            t *= BACKTRACK
        if not accepted:
            # stalled line search: give up on this start point
            break
        v, loc = cand, trial
    return v, loc, None


@dataclass
class LaplaceCache:
    """Second-order expansion of Q for one hypothesis and schedule."""

    model: TemporalModel
    times: np.ndarray
    sigma: float
    v_hat: np.ndarray
    A: np.ndarray
    q_at_vhat: float
    logdet_K: float
    logdet_A: float
    logdet_A_plus: float        # log|A + sigma^{-2} I|
    S_chol: np.ndarray          # lower factor of A^{-1} + sigma^2 I
    log_C: float
    iterations: int = 0
    restarts: int = 0

    @property
    def M(self) -> int:
        return len(self.v_hat)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "times": self.times.tolist(),
            "sigma": self.sigma,
            "v_hat": self.v_hat.tolist(),
            "A": self.A.tolist(),
            "q_at_vhat": self.q_at_vhat,
            "logdet_K": self.logdet_K,
            "logdet_A": self.logdet_A,
            "logdet_A_plus": self.logdet_A_plus,
            "S_chol": self.S_chol.tolist(),
            "log_C": self.log_C,
            "iterations": self.iterations,
            "restarts": self.restarts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LaplaceCache":
        m = d["model"]
        model = TemporalModel(CovKernel.from_dict(m["kernel"]),
                              warp_from_dict(m["warp"]))
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(model, arr("times"), float(d["sigma"]), arr("v_hat"),
                   arr("A"), float(d["q_at_vhat"]), float(d["logdet_K"]),
                   float(d["logdet_A"]), float(d["logdet_A_plus"]),
                   arr("S_chol"), float(d["log_C"]), int(d["iterations"]),
                   int(d["restarts"]))

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "LaplaceCache":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def laplace_fit(model: TemporalModel, times, sigma_p: float,
                seed: int = 0) -> LaplaceCache:
    """Maximise Q by damped Newton ascent and expand around the maximiser.

    The first start is ``W(0)`` in every coordinate; up to five restarts
    perturb the latent start by ``N(0, 0.25)`` before warping.

    Raises
    ------
    NonConvergence
        If no start reaches a gradient infinity-norm of ``1e-6``.
    numpy.linalg.LinAlgError
        If the negative Hessian at the maximiser is not positive definite.
    """
    if sigma_p <= 0:
        raise ValueError("sigma_p must be positive")
    times = np.asarray(times, dtype=float)
    M = len(times)
    L = _kernel_factor(gram(model.kernel, times))
    gen = RngStream(seed, stream_id=0x1A91ACE).generator()

    found = None
    for restart in range(N_RESTARTS + 1):
        z0 = np.zeros(M) if restart == 0 else gen.normal(0.0, 0.5, M)
        v0 = np.asarray(model.warp.forward(z0), dtype=float)
        v, loc, it = _ascend(model, L, v0)
        if it is not None:
            found = (v, loc, it, restart)
            break
    if found is None:
        raise NonConvergence(
            f"Newton ascent on Q did not reach gradient {GRAD_TOL:g} after "
            f"{N_RESTARTS} restarts")
    v, loc, it, restart = found

    B = _inner_matrix(L, loc.F)
    try:
        R = linalg.cholesky(B, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "negative Hessian of Q is not positive definite at the "
            "maximiser") from exc
    logdet_K = 2.0 * np.sum(np.log(np.diag(L)))
    logdet_B = 2.0 * np.sum(np.log(np.diag(R)))
    logdet_A = 2.0 * np.sum(np.log(loc.dG)) - logdet_K + logdet_B

    # A^{-1} = P P^T with P = D^{-1} L R^{-T}
    P = linalg.solve_triangular(R, L.T, lower=True, check_finite=False).T
    P = P / loc.dG[:, None]
    S = P @ P.T + sigma_p ** 2 * np.eye(M)
    S = 0.5 * (S + S.T)
    S_chol = linalg.cholesky(S, lower=True, check_finite=False)
    logdet_S = 2.0 * np.sum(np.log(np.diag(S_chol)))

    # log|A + s^-2 I| = log|A| + log|S| - 2 M log s
    logdet_A_plus = logdet_A + logdet_S - 2.0 * M * np.log(sigma_p)
    log_C = (-0.5 * logdet_K - M * np.log(sigma_p) - 0.5 * M * _LOG_2PI
             + loc.q - 0.5 * logdet_A_plus)

    Kinv = linalg.cho_solve((L, True), np.eye(M), check_finite=False)
    return LaplaceCache(model, times, float(sigma_p), v, loc.hessian(Kinv),
                        loc.q, float(logdet_K), float(logdet_A),
                        float(logdet_A_plus), S_chol, float(log_C), it,
                        restart)


def _quad_form(cache: LaplaceCache, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-1] != cache.M:
        raise ValueError(
            f"observation length {Z.shape[-1]} does not match M={cache.M}")
    r = (Z - cache.v_hat).T
    a = linalg.solve_triangular(cache.S_chol, r, lower=True,
                                check_finite=False)
    return np.sum(a * a, axis=0)


def approx_log_likelihood(cache: LaplaceCache, Z):
    """Laplace-approximated ``log p(Z | H)``; ``Z`` may be ``(n, M)``."""
    out = cache.log_C - 0.5 * _quad_form(cache, Z)
    return float(out) if np.ndim(Z) == 1 else out


def wgplrt_statistic(cache0: LaplaceCache, cache1: LaplaceCache, Z):
    """``-log Lambda = log p1(Z) - log p0(Z)`` under the Laplace expansion."""
    out = (cache1.log_C - cache0.log_C
           - 0.5 * _quad_form(cache1, Z) + 0.5 * _quad_form(cache0, Z))
    return float(out) if np.ndim(Z) == 1 else out


def wgplrt_decide(statistic, log_gamma_p):
    """1 iff ``statistic > -log_gamma_p``; ties decide 0."""
    s = np.asarray(statistic, dtype=float)
    out = (s > -float(log_gamma_p)).astype(np.int8)
    return int(out) if out.ndim == 0 else out
