"""
Neighbourhood likelihood-ratio test for integral sensors.

The likelihood of integral observations has no usable closed form, so each
hypothesis is represented by a bank of simulated observation vectors reduced
to low-dimensional summaries.  An observation is scored by how many bank
entries of each hypothesis fall within distance ``delta`` of its own
summary:

    Lambda = (n_H0 + eps) / (n_H1 + eps)

and the sensor reports 1 when ``Lambda < gamma``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy import stats

from .field import (SensorScene, TemporalModel, integral_sampler,
                    sample_integral_obs)
from .stochastic import RngStream

__all__ = [
    "SummaryStat",
    "SampleBank",
    "summary_acf",
    "summary_moments",
    "build_bank",
    "bank_from_models",
    "ratio_from_counts",
    "neighbour_counts",
    "nlrt_statistic",
    "nlrt_decide",
]

_MOMENTS = ("mean", "variance", "skewness", "kurtosis")


def summary_acf(z, lags=(1, 2, 3, 4)) -> np.ndarray:
    """Sample autocorrelation at the given lags.

    Works along the last axis, so ``z`` may be a ``(n, K)`` batch.  A
    constant series has a zero denominator and yields zeros.
    """
    z = np.asarray(z, dtype=float)
    lags = [int(t) for t in lags]
    K = z.shape[-1]
    if not lags or min(lags) < 1 or max(lags) >= K:
        raise ValueError(f"lags must lie in [1, {K - 1}]")
    d = z - z.mean(axis=-1, keepdims=True)
    denom = np.sum(d * d, axis=-1)
    out = np.stack([np.sum(d[..., :K - t] * d[..., t:], axis=-1)
                    for t in lags], axis=-1)
    safe = np.where(denom > 0, denom, 1.0)
    return np.where((denom > 0)[..., None], out / safe[..., None], 0.0)


def summary_moments(z, which=_MOMENTS) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    cols = []
    for name in which:
        if name == "mean":
            cols.append(z.mean(axis=-1))
        elif name == "variance":
            cols.append(z.var(axis=-1))
        elif name == "skewness":
            cols.append(np.nan_to_num(stats.skew(z, axis=-1)))
        elif name == "kurtosis":
            cols.append(np.nan_to_num(stats.kurtosis(z, axis=-1)))
        else:
            raise ValueError(f"unknown moment {name!r}")
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class SummaryStat:
    """Summary statistic: ``ACF`` at lags, ``Moments``, or a ``Concat``."""

    kind: str = "ACF"
    lags: tuple = (1, 2, 3, 4)
    which: tuple = _MOMENTS
    parts: tuple = ()

    def __post_init__(self):
        if self.kind not in ("ACF", "Moments", "Concat"):
            raise ValueError(f"unknown summary kind {self.kind!r}")
        if self.kind == "Concat" and not self.parts:
            raise ValueError("Concat summary needs at least one part")

    def __call__(self, z) -> np.ndarray:
        if self.kind == "ACF":
            return summary_acf(z, self.lags)
        if self.kind == "Moments":
            return summary_moments(z, self.which)
        return np.concatenate([p(z) for p in self.parts], axis=-1)

    def dim(self) -> int:
        if self.kind == "ACF":
            return len(self.lags)
        if self.kind == "Moments":
            return len(self.which)
        return sum(p.dim() for p in self.parts)

    def to_dict(self) -> dict:
        if self.kind == "ACF":
            return {"kind": "ACF", "lags": list(self.lags)}
        if self.kind == "Moments":
            return {"kind": "Moments", "which": list(self.which)}
        return {"kind": "Concat", "parts": [p.to_dict() for p in self.parts]}

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryStat":
        kind = d.get("kind", "ACF")
        if kind == "ACF":
            return cls("ACF", lags=tuple(int(t) for t in d.get("lags", (1, 2, 3, 4))))
        if kind == "Moments":
            return cls("Moments", which=tuple(d.get("which", _MOMENTS)))
        return cls("Concat", parts=tuple(cls.from_dict(p) for p in d["parts"]))


@dataclass
class SampleBank:
    """Summaries of ``J`` simulated integral observations per hypothesis."""

    h0: np.ndarray                  # (J, l)
    h1: np.ndarray                  # (J, l)
    summary: SummaryStat
    meta: dict = field(default_factory=dict)
    standardize: bool = False

    def __post_init__(self):
        self.h0 = np.atleast_2d(np.asarray(self.h0, dtype=float))
        self.h1 = np.atleast_2d(np.asarray(self.h1, dtype=float))
        if self.h0.shape != self.h1.shape:
            raise ValueError("both hypotheses need banks of equal shape")
        self._trees = None

    @property
    def J(self) -> int:
        return self.h0.shape[0]

    @property
    def dim(self) -> int:
        return self.h0.shape[1]

    def _scaling(self):
        if not self.standardize:
            return 0.0, 1.0
        pooled = np.vstack([self.h0, self.h1])
        sd = pooled.std(axis=0)
        return pooled.mean(axis=0), np.where(sd > 0, sd, 1.0)

    def transform(self, s):
        loc, sc = self._scaling()
        return (np.asarray(s, dtype=float) - loc) / sc

    def trees(self):
        if self._trees is None:
            self._trees = (cKDTree(self.transform(self.h0)),
                           cKDTree(self.transform(self.h1)))
        return self._trees

    def key(self) -> str:
        """Hash of the generation metadata, used to name files on disk."""
        blob = json.dumps(self.meta, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path: str) -> None:
        np.savez_compressed(
            path, h0=self.h0, h1=self.h1, version=np.array(1),
            summary=np.array(json.dumps(self.summary.to_dict())),
            meta=np.array(json.dumps(self.meta, default=str)),
            standardize=np.array(self.standardize))

    @classmethod
    def load(cls, path: str) -> "SampleBank":
        with np.load(path, allow_pickle=False) as f:
            return cls(f["h0"], f["h1"],
                       SummaryStat.from_dict(json.loads(str(f["summary"]))),
                       json.loads(str(f["meta"])), bool(f["standardize"]))


def _simulate_summaries(model, K, T, sigma_i, Q, J, summary, stream):
    sampler = integral_sampler(model, K, T, Q)
    Z = sample_integral_obs(model, K, T, sigma_i, Q, stream, size=J,
                            sampler=sampler)
    return summary(Z)


def build_bank(scene: SensorScene, J: int, summary: SummaryStat,
               rng: RngStream, hypothesis: int | None = None,
               standardize: bool = False):
    """Simulate ``J`` integral observations (noise included) per hypothesis.

    With ``hypothesis`` set to 0 or 1 only that half is simulated and the
    summary array is returned; otherwise a full :class:`SampleBank`.
    """
    if J < 1:
        raise ValueError("bank size J must be at least 1")
    args = (scene.K, scene.T, scene.sigma_i, scene.substeps, J, summary)
    if hypothesis is not None:
        return _simulate_summaries(scene.model(hypothesis), *args,
                                   rng.spawn(hypothesis))
    h0 = _simulate_summaries(scene.h0, *args, rng.spawn(0))
    h1 = _simulate_summaries(scene.h1, *args, rng.spawn(1))
    meta = {"J": J, "seed": rng.seed, "stream": rng.stream_id,
            "path": list(rng.path), "K": scene.K, "T": scene.T,
            "sigma_i": scene.sigma_i, "substeps": scene.substeps,
            "h0": scene.h0.to_dict(), "h1": scene.h1.to_dict(),
            "summary": summary.to_dict()}
    return SampleBank(h0, h1, summary, meta, standardize)


def bank_from_models(h0: TemporalModel, h1: TemporalModel, K: int, T: float,
                     sigma_i: float, Q: int, J: int, summary: SummaryStat,
                     rng: RngStream) -> SampleBank:
    """Bank for a pair of temporal models without a full scene."""
    a = _simulate_summaries(h0, K, T, sigma_i, Q, J, summary, rng.spawn(0))
    b = _simulate_summaries(h1, K, T, sigma_i, Q, J, summary, rng.spawn(1))
    meta = {"J": J, "seed": rng.seed, "K": K, "T": T, "sigma_i": sigma_i,
            "substeps": Q, "h0": h0.to_dict(), "h1": h1.to_dict(),
            "summary": summary.to_dict()}
    return SampleBank(a, b, summary, meta)


def neighbour_counts(bank: SampleBank, s, delta: float):
    """Counts ``(n_H0, n_H1)`` of bank entries within ``delta`` of ``s``.

    ``s`` is one summary vector or an ``(n, l)`` batch.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != bank.dim:
        raise ValueError(
            f"summary dimension {s.shape[-1]} does not match bank {bank.dim}")
    t0, t1 = bank.trees()
    x = bank.transform(s)
    n0 = t0.query_ball_point(x, delta, return_length=True)
    n1 = t1.query_ball_point(x, delta, return_length=True)
    return np.asarray(n0), np.asarray(n1)


def nlrt_statistic(bank: SampleBank, Z, delta: float = 0.1,
                   epsilon: float = 0.1):
    """``(n_H0 + eps) / (n_H1 + eps)`` for raw observations ``Z``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n0, n1 = neighbour_counts(bank, bank.summary(Z), delta)
    out = (n0 + epsilon) / (n1 + epsilon)
    return float(out) if np.ndim(out) == 0 else out


def ratio_from_counts(n0, n1, epsilon: float):
    return (np.asarray(n0) + epsilon) / (np.asarray(n1) + epsilon)


def nlrt_decide(statistic, gamma_i):
    """1 iff ``statistic < gamma_i``; ties decide 0."""
    out = (np.asarray(statistic, dtype=float) < float(gamma_i)).astype(np.int8)
    return int(out) if out.ndim == 0 else out
