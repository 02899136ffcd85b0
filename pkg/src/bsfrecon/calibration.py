"""
Monte-Carlo calibration of the two sensor tests.

Both tests are scored on fresh simulations under each hypothesis.  The
empirical law under H0 fixes the threshold at a target significance level;
the laws under H0 and H1 together give the sensor's binary channel
(transition matrix) and its ROC curve.

Orientation: a WGPLRT sensor reports 1 when ``-log Lambda`` is *above* its
threshold, an NLRT sensor when ``Lambda`` is *below* it.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .field import (SensorScene, sample_integral_obs, sample_point_obs)
from .nlrt import SampleBank, nlrt_statistic
from .stochastic import RngStream, chol_with_jitter, gram
from .wgplrt import LaplaceCache, wgplrt_statistic

__all__ = [
    "StatKind",
    "StatisticSample",
    "TransitionMatrix",
    "RocCurve",
    "Calibration",
    "sample_statistics",
    "threshold_for_alpha",
    "transition_matrix",
    "roc",
    "calibrate",
]


class StatKind(str, enum.Enum):
    WGPLRT = "WGPLRT"
    NLRT = "NLRT"


@dataclass(frozen=True)
class StatisticSample:
    under_h0: np.ndarray
    under_h1: np.ndarray
    kind: StatKind

    def __post_init__(self):
        object.__setattr__(self, "kind", StatKind(self.kind))
        for name in ("under_h0", "under_h1"):
            v = np.sort(np.asarray(getattr(self, name), dtype=float))
            if v.ndim != 1 or len(v) == 0:
                raise ValueError(f"{name} must be a nonempty vector")
            object.__setattr__(self, name, v)

    @property
    def R(self) -> int:
        return len(self.under_h0)

    def oriented(self):
        """Scores that grow with evidence for H1."""
        if self.kind is StatKind.WGPLRT:
            return self.under_h0, self.under_h1
        return -self.under_h0, -self.under_h1


@dataclass(frozen=True)
class TransitionMatrix:
    """Binary channel ``P(decision | true label)``; rows are true labels."""

    p01: float
    p10: float

    def __post_init__(self):
        for p in (self.p01, self.p10):
            if not 0.0 <= p <= 1.0:
                raise ValueError("transition probabilities must lie in [0, 1]")

    @property
    def p00(self) -> float:
        return 1.0 - self.p01

    @property
    def p11(self) -> float:
        return 1.0 - self.p10

    def as_array(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])

    @classmethod
    def from_array(cls, U) -> "TransitionMatrix":
        U = np.asarray(U, dtype=float)
        if U.shape != (2, 2) or not np.allclose(U.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("transition matrix must be 2x2 row-stochastic")
        return cls(float(U[0, 1]), float(U[1, 0]))

    @classmethod
    def perfect(cls) -> "TransitionMatrix":
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check_R(R):
    if R < 100:
        raise ValueError("calibration needs R >= 100 draws per hypothesis")


def sample_statistics(scene: SensorScene, kind, R: int, rng: RngStream, *,
                      caches: tuple[LaplaceCache, LaplaceCache] | None = None,
                      bank: SampleBank | None = None, delta: float = 0.1,
                      epsilon: float = 0.1) -> StatisticSample:
    """Score ``R`` fresh simulations per hypothesis with the chosen test.

    The temporal label is set directly; the spatial field plays no role.
    WGPLRT needs the two Laplace caches, NLRT the shared sample bank.
    """
    _check_R(R)
    kind = StatKind(kind)
    out = []
    for label in (0, 1):
        model = scene.model(label)
        stream = rng.spawn(label)
        if kind is StatKind.WGPLRT:
            if caches is None:
                raise ValueError("WGPLRT calibration needs Laplace caches")
            L = chol_with_jitter(gram(model.kernel, scene.times))[0]
            Z = sample_point_obs(model, scene.times, scene.sigma_p, stream,
                                 size=R, chol=L)
            out.append(wgplrt_statistic(caches[0], caches[1], Z))
        else:
            if bank is None:
                raise ValueError("NLRT calibration needs a sample bank")
            Z = sample_integral_obs(model, scene.K, scene.T, scene.sigma_i,
                                    scene.substeps, stream, size=R)
            out.append(nlrt_statistic(bank, Z, delta, epsilon))
    return StatisticSample(out[0], out[1], kind)


def threshold_for_alpha(sample: StatisticSample, alpha: float) -> float:
    """Empirical quantile of the H0 statistic (type-7 interpolation).

    WGPLRT takes the ``1 - alpha`` quantile of ``-log Lambda``; NLRT takes
    the ``alpha`` quantile of ``Lambda``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    q = 1.0 - alpha if sample.kind is StatKind.WGPLRT else alpha
    return float(np.quantile(sample.under_h0, q))


def decide(kind, statistic, threshold):
    s = np.asarray(statistic, dtype=float)
    if StatKind(kind) is StatKind.WGPLRT:
        return (s > threshold).astype(np.int8)
    return (s < threshold).astype(np.int8)


def transition_matrix(sample: StatisticSample,
                      threshold: float) -> TransitionMatrix:
    """Empirical type-I rate ``p01`` and type-II rate ``p10``."""
    p01 = float(np.mean(decide(sample.kind, sample.under_h0, threshold)))
    p10 = float(np.mean(1 - decide(sample.kind, sample.under_h1, threshold)))
    return TransitionMatrix(p01, p10)


def roc(sample: StatisticSample) -> RocCurve:
    """ROC over every pooled threshold; tied scores move as one step."""
    s0, s1 = sample.oriented()
    scores = np.concatenate([s0, s1])
    labels = np.concatenate([np.zeros(len(s0)), np.ones(len(s1))])
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(scores) != 0), len(scores) - 1]
    tp = np.cumsum(labels)[last]
    fp = np.cumsum(1.0 - labels)[last]
    fpr = np.r_[0.0, fp / len(s0)]
    tpr = np.r_[0.0, tp / len(s1)]
    return RocCurve(fpr, tpr, float(np.trapezoid(tpr, fpr)))


@dataclass
class Calibration:
    """Threshold, channel and ROC of one calibrated sensor type."""

    kind: StatKind
    alpha: float
    threshold: float
    transition: TransitionMatrix
    roc: RocCurve | None
    R: int
    seed: int

    @property
    def log_gamma(self) -> float:
        """``log gamma`` in the convention of each test's decision rule."""
        if self.kind is StatKind.WGPLRT:
            return -self.threshold
        return float(np.log(self.threshold)) if self.threshold > 0 else -np.inf

    def decide(self, statistic):
        return decide(self.kind, statistic, self.threshold)

    def to_dict(self) -> dict:
        return {
            "kind": StatKind(self.kind).value,
            "R": self.R,
            "seed": self.seed,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "transition_matrix": self.transition.as_array().tolist(),
            "roc_points": None if self.roc is None else self.roc.points,
            "auc": None if self.roc is None else self.roc.auc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        curve = None
        if d.get("roc_points"):
            pts = np.asarray(d["roc_points"], dtype=float)
            curve = RocCurve(pts[:, 0], pts[:, 1], float(d["auc"]))
        return cls(StatKind(d["kind"]), float(d["alpha"]),
                   float(d["threshold"]),
                   TransitionMatrix.from_array(d["transition_matrix"]),
                   curve, int(d["R"]), int(d["seed"]))

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path: str) -> "Calibration":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def calibrate(sample: StatisticSample, alpha: float, seed: int = 0,
              with_roc: bool = True) -> Calibration:
    thr = threshold_for_alpha(sample, alpha)
    return Calibration(sample.kind, alpha, thr,
                       transition_matrix(sample, thr),
                       roc(sample) if with_roc else None, sample.R, seed)
