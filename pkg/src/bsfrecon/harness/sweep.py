"""One-parameter sensitivity sweeps over noise level, K, M or alpha."""

from __future__ import annotations

import os

import numpy as np

from ..calibration import StatKind
from .config import ExperimentConfig, build_scene
from .io import write_csv
from .pipeline import calibrate_scene, run_pipeline
from .svg import line_plot

__all__ = ["AXES", "auc_stderr", "sweep"]

AXES = {
    "noise_sigma": ("scene.sigma_p", "scene.sigma_i"),
    "K_intervals": ("scene.K",),
    "M_points": ("scene.M",),
    "alpha": ("alpha",),
}

# which test a ROC-only sweep needs to recalibrate
_ROC_KINDS = {"K_intervals": (StatKind.NLRT,), "M_points": (StatKind.WGPLRT,)}


def auc_stderr(auc: float, n0: int, n1: int) -> float:
    """Large-sample standard error of an empirical AUC."""
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc * auc / (1.0 + auc)
    var = (auc * (1 - auc) + (n1 - 1) * (q1 - auc ** 2)
           + (n0 - 1) * (q2 - auc ** 2)) / (n0 * n1)
    return float(np.sqrt(max(var, 0.0)))


def _roc_rows(cfg: ExperimentConfig, axis: str, value):
    scene = build_scene(cfg)
    kinds = _ROC_KINDS.get(axis)
    if kinds is None:
        kinds = [k for k, n in ((StatKind.WGPLRT, scene.n_p),
                                (StatKind.NLRT, scene.n_i)) if n]
    cal = calibrate_scene(scene, cfg, kinds=kinds)
    rows = []
    for kind in kinds:
        c = cal.p if kind is StatKind.WGPLRT else cal.i
        tag = "p" if kind is StatKind.WGPLRT else "i"
        R = c.R
        rows.append([value, f"auc_{tag}", c.roc.auc,
                     auc_stderr(c.roc.auc, R, R)])
        for name, p in (("fpr", c.transition.p01),
                        ("tpr", c.transition.p11)):
            rows.append([value, f"{name}_{tag}", p,
                         float(np.sqrt(p * (1 - p) / R))])
    return rows


def _pipeline_rows(cfg, value, threads, realizations):
    res = run_pipeline(cfg, None, threads, realizations=realizations)
    rows = []
    for r in res.rows:
        for name in ("mse", "f1", "fpr", "tpr"):
            se = r.mse_stderr if name == "mse" else float("nan")
            rows.append([value, f"{r.algorithm}_{name}", getattr(r, name), se])
    return rows


def sweep(cfg: ExperimentConfig, axis: str | None = None, values=None,
          mode: str | None = None, out_dir: str | None = None,
          threads: int = 1) -> list:
    """Re-run calibration (and the pipeline, in ``pipeline`` mode) for each
    value on ``axis``.

    Returns tidy rows ``(axis_value, metric, mean, stderr)`` and, with
    ``out_dir``, writes ``sweep.csv`` and ``sweep.svg``.
    """
    sw = cfg["sweep"] or {}
    axis = axis or sw.get("axis")
    values = list(values if values is not None else sw.get("values") or [])
    mode = mode or sw.get("mode", "pipeline")
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ValueError("sweep needs at least one value")
    realizations = int(sw.get("realizations") or cfg.realizations)
    rows = []
    for value in values:
        v = int(value) if axis in ("K_intervals", "M_points") else float(value)
        sub = cfg.with_overrides(**{k: v for k in AXES[axis]})
        if mode == "roc":
            rows += _roc_rows(sub, axis, v)
        else:
            rows += _pipeline_rows(sub, v, threads, realizations)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "sweep.csv"),
                  ["axis_value", "metric", "mean", "stderr"], rows)
        series = {}
        for v, metric, mean, _ in rows:
            series.setdefault(metric, ([], []))
            series[metric][0].append(v)
            series[metric][1].append(mean)
        line_plot(os.path.join(out_dir, "sweep.svg"), series,
                  f"sweep over {axis}", axis, "value")
    return rows
