"""Classification scores for reconstructed binary fields."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["Confusion", "MetricsRow", "confusion", "average_rows"]


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def mse(self) -> float:
        """Mean of ``(y_hat - y)**2``, i.e. the misclassification rate."""
        return (self.fp + self.fn) / self.total

    @property
    def fpr(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else 0.0

    @property
    def tpr(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        if self.tp == 0:
            if denom:
                warnings.warn("F1 undefined (no true positives); reporting 0",
                              RuntimeWarning, stacklevel=2)
            return 0.0
        return 2 * self.tp / denom


def confusion(y_true, y_pred) -> Confusion:
    y = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if y.shape != p.shape:
        raise ValueError("label and prediction shapes differ")
    return Confusion(int(np.sum(y & p)), int(np.sum(~y & p)),
                     int(np.sum(~y & ~p)), int(np.sum(y & ~p)))


@dataclass(frozen=True)
class MetricsRow:
    algorithm: str
    mse: float
    f1: float
    fpr: float
    tpr: float
    realizations: int
    mse_stderr: float = 0.0

    def as_dict(self) -> dict:
        return {"algorithm": self.algorithm, "mse": self.mse, "f1": self.f1,
                "fpr": self.fpr, "tpr": self.tpr,
                "mse_stderr": self.mse_stderr,
                "realizations": self.realizations}


def average_rows(algorithm: str, confusions) -> MetricsRow:
    """Average per-realization scores (not pooled counts)."""
    confusions = list(confusions)
    if not confusions:
        raise ValueError("nothing to average")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = np.array([[c.mse, c.f1, c.fpr, c.tpr] for c in confusions])
    n = len(m)
    se = float(m[:, 0].std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    mean = m.mean(axis=0)
    return MetricsRow(algorithm, float(mean[0]), float(mean[1]),
                      float(mean[2]), float(mean[3]), n, se)
