"""
End-to-end experiment: calibrate both sensor tests, simulate realizations,
decide at every sensor, fuse the decisions with S-BLUE and score the
reconstruction against the oracle and KNN baselines.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..calibration import (Calibration, StatKind, TransitionMatrix, calibrate,
                           sample_statistics)
from ..field import Realization, SensorScene, realize
from ..nlrt import SampleBank, SummaryStat, build_bank, nlrt_statistic
from ..sblue import SBlueOffline, sblue_offline, sblue_predict
from ..stochastic import RngStream
from ..wgplrt import LaplaceCache, laplace_fit, wgplrt_statistic
from .baselines import OracleRegressor, knn_baseline
from .config import ExperimentConfig, build_scene
from .io import write_csv, write_field_csv
from .metrics import average_rows, confusion
from .svg import heat_map, line_plot

__all__ = ["SensorCalibrations", "PipelineResult", "calibrate_scene",
           "decide_sensors", "run_pipeline", "write_calibrations"]

# top-level stream ids under the experiment seed
CAL_STREAM, BANK_STREAM, REAL_STREAM, KNN_STREAM = 1, 2, 3, 4


@dataclass
class SensorCalibrations:
    """Fitted tests and channels for both sensor types (``None`` if absent)."""

    p: Calibration | None = None
    i: Calibration | None = None
    caches: tuple[LaplaceCache, LaplaceCache] | None = None
    bank: SampleBank | None = None
    samples: dict = field(default_factory=dict)
    delta: float = 0.1
    epsilon: float = 0.1

    def transitions(self, scene: SensorScene):
        out = []
        if scene.n_p:
            out += [self.p.transition] * scene.n_p
        if scene.n_i:
            out += [self.i.transition] * scene.n_i
        return out


def _reference(cfg, kind):
    pub = cfg["reference"] or {}
    if not pub.get("use"):
        return None
    entry = pub.get("p" if kind is StatKind.WGPLRT else "i")
    if not entry:
        return None
    lg = float(entry["log_gamma"])
    thr = -lg if kind is StatKind.WGPLRT else float(np.exp(lg))
    return thr, TransitionMatrix.from_array(entry["U"])


def calibrate_scene(scene: SensorScene, cfg: ExperimentConfig,
                    alpha: float | None = None,
                    kinds=None) -> SensorCalibrations:
    """Fit Laplace caches and/or the NLRT bank, then calibrate thresholds.

    ``kinds`` restricts the work to a subset of test kinds; by default a
    test is calibrated only if the scene has sensors of that type.
    """
    alpha = cfg.alpha if alpha is None else alpha
    R = int(cfg["calibration"]["R"])
    cal_seed = int(cfg["calibration"]["seed"])
    nl = cfg["nlrt"]
    out = SensorCalibrations(delta=float(nl["delta"]),
                             epsilon=float(nl["epsilon"]))
    if kinds is None:
        kinds = [k for k, n in ((StatKind.WGPLRT, scene.n_p),
                                (StatKind.NLRT, scene.n_i)) if n]
    stream = RngStream(cfg.seed, CAL_STREAM, (cal_seed,))
    for kind in kinds:
        kind = StatKind(kind)
        if kind is StatKind.WGPLRT:
            out.caches = (laplace_fit(scene.h0, scene.times, scene.sigma_p),
                          laplace_fit(scene.h1, scene.times, scene.sigma_p))
            sample = sample_statistics(scene, kind, R, stream.spawn(0),
                                       caches=out.caches)
        else:
            out.bank = build_bank(scene, int(nl["J"]),
                                  SummaryStat.from_dict(nl["summary"]),
                                  RngStream(cfg.seed, BANK_STREAM),
                                  standardize=bool(nl.get("standardize")))
            sample = sample_statistics(scene, kind, R, stream.spawn(1),
                                       bank=out.bank, delta=out.delta,
                                       epsilon=out.epsilon)
        cal = calibrate(sample, alpha, seed=cal_seed)
        pub = _reference(cfg, kind)
        if pub is not None:
            cal.threshold, cal.transition = pub
        out.samples[kind] = sample
        if kind is StatKind.WGPLRT:
            out.p = cal
        else:
            out.i = cal
    return out


def decide_sensors(scene: SensorScene, cal: SensorCalibrations,
                   real: Realization) -> np.ndarray:
    """One bit per sensor, point sensors first."""
    bits = []
    if scene.n_p:
        s = wgplrt_statistic(cal.caches[0], cal.caches[1], real.point_obs)
        bits.append(cal.p.decide(s))
    if scene.n_i:
        s = nlrt_statistic(cal.bank, real.integral_obs, cal.delta, cal.epsilon)
        bits.append(cal.i.decide(s))
    return np.concatenate(bits).astype(np.int8)


@dataclass
class PipelineResult:
    rows: list
    scene: SensorScene
    calibrations: SensorCalibrations
    offline: SBlueOffline
    first: dict
    artifacts: list = field(default_factory=list)


def _one_realization(r, scene, cfg, cal, offline, oracle, mask):
    real = realize(scene, RngStream(cfg.seed, REAL_STREAM).spawn(r))
    decisions = decide_sensors(scene, cal, real)
    truth = real.y_grid
    pred = sblue_predict(offline, decisions)
    out = {"SBLUE": confusion(truth[mask], pred.y_hat[mask])}
    extra = {"real": real, "decisions": decisions, "sblue": pred}
    base = cfg["baselines"]
    if base.get("oracle", True):
        yo = oracle.predict(real.g_sensors)
        out["Oracle"] = confusion(truth[mask], yo[mask])
    if base.get("knn", True):
        yk, k = knn_baseline(decisions, scene.sensors, scene.grid,
                             base.get("knn_k_grid", [1, 3, 5, 7, 9, 11, 13, 15]),
                             int(base.get("knn_folds", 5)),
                             RngStream(cfg.seed, KNN_STREAM).spawn(r).generator())
        out["KNN"] = confusion(truth[mask], yk[mask])
        extra["knn_k"] = k
    return out, extra


def _prewarm(scene):
    scene.spatial_law
    for label in (0, 1):
        if scene.n_p:
            scene.point_cholesky(label)
        if scene.n_i:
            scene.integral_sampler(label)


def run_pipeline(cfg: ExperimentConfig, out_dir: str | None = None,
                 threads: int = 1, calibrations: SensorCalibrations | None = None,
                 realizations: int | None = None) -> PipelineResult:
    """Calibrate (unless given), reconstruct ``realizations`` fields, score.

    Writes artifacts to ``out_dir`` when it is not ``None``.
    """
    scene = build_scene(cfg)
    cal = calibrations or calibrate_scene(scene, cfg)
    n_real = realizations or cfg.realizations
    offline = sblue_offline(scene.sensors, scene.grid, scene.spatial_kernel,
                            scene.spatial_mean, scene.threshold.c,
                            cal.transitions(scene))
    oracle = OracleRegressor(scene.sensors, scene.grid, scene.spatial_kernel,
                             scene.spatial_mean, scene.threshold.c)
    mask = scene.heldout_mask
    _prewarm(scene)

    def job(r):
        return _one_realization(r, scene, cfg, cal, offline, oracle, mask)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(n_real)))
    else:
        results = [job(r) for r in range(n_real)]

    order = ["Oracle", "SBLUE", "KNN"]
    rows = []
    for name in order:
        confs = [res[0][name] for res in results if name in res[0]]
        if confs:
            rows.append(average_rows(name, confs))
    result = PipelineResult(rows, scene, cal, offline, results[0][1])
    if out_dir is not None:
        result.artifacts = write_artifacts(result, out_dir)
    return result


def write_metrics(path: str, rows) -> str:
    return write_csv(path, ["algorithm", "mse", "f1", "fpr", "tpr",
                            "mse_stderr", "realizations"],
                     ([r.algorithm, r.mse, r.f1, r.fpr, r.tpr, r.mse_stderr,
                       r.realizations] for r in rows))


def write_roc(path: str, cal: SensorCalibrations) -> str:
    rows = []
    for name, c in (("WGPLRT", cal.p), ("NLRT", cal.i)):
        if c is not None and c.roc is not None:
            rows += [[name, f, t] for f, t in c.roc.points]
    return write_csv(path, ["test", "fpr", "tpr"], rows)


def write_calibrations(out_dir: str, cal: SensorCalibrations) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if cal.p is not None:
        paths.append(os.path.join(out_dir, "calibration_p.json"))
        cal.p.save(paths[-1])
        for h, cache in enumerate(cal.caches):
            paths.append(os.path.join(out_dir, f"laplace_h{h}.json"))
            cache.save(paths[-1])
    if cal.i is not None:
        paths.append(os.path.join(out_dir, "calibration_i.json"))
        cal.i.save(paths[-1])
        paths.append(os.path.join(out_dir, "bank.npz"))
        cal.bank.save(paths[-1])
    paths.append(write_roc(os.path.join(out_dir, "roc.csv"), cal))
    curves = {}
    for name, c in (("WGPLRT", cal.p), ("NLRT", cal.i)):
        if c is not None and c.roc is not None:
            curves[f"{name} (AUC {c.roc.auc:.3f})"] = (c.roc.fpr, c.roc.tpr)
    if curves:
        paths.append(line_plot(os.path.join(out_dir, "roc.svg"), curves,
                               "ROC", "false positive rate",
                               "true positive rate"))
    return paths


def load_calibrations(in_dir: str, scene: SensorScene,
                      cfg: ExperimentConfig) -> SensorCalibrations:
    """Reload what :func:`write_calibrations` stored."""
    nl = cfg["nlrt"]
    out = SensorCalibrations(delta=float(nl["delta"]),
                             epsilon=float(nl["epsilon"]))
    if scene.n_p:
        out.p = Calibration.load(os.path.join(in_dir, "calibration_p.json"))
        out.caches = tuple(LaplaceCache.load(
            os.path.join(in_dir, f"laplace_h{h}.json")) for h in (0, 1))
    if scene.n_i:
        out.i = Calibration.load(os.path.join(in_dir, "calibration_i.json"))
        out.bank = SampleBank.load(os.path.join(in_dir, "bank.npz"))
    return out


def write_artifacts(result: PipelineResult, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    scene, first = result.scene, result.first
    paths = [write_metrics(os.path.join(out_dir, "metrics.csv"), result.rows)]
    paths += write_calibrations(out_dir, result.calibrations)
    real = first["real"]
    grid = scene.grid
    paths.append(write_field_csv(os.path.join(out_dir, "field_true.csv"),
                                 grid, real.y_grid))
    paths.append(write_field_csv(os.path.join(out_dir, "field_pred.csv"),
                                 grid, first["sblue"].y_hat))
    paths.append(write_field_csv(os.path.join(out_dir, "latent_true.csv"),
                                 grid, real.g_grid))
    paths.append(write_field_csv(os.path.join(out_dir, "latent_pred.csv"),
                                 grid, first["sblue"].g_hat))
    paths.append(write_field_csv(os.path.join(out_dir, "risk.csv"), grid,
                                 result.offline.bayes_risk))
    paths.append(write_csv(os.path.join(out_dir, "decisions.csv"),
                           ["sensor_id", "bit"],
                           enumerate(first["decisions"].tolist())))
    for name, vals in (("field_true", real.y_grid),
                       ("field_pred", first["sblue"].y_hat),
                       ("risk", result.offline.bayes_risk)):
        paths.append(heat_map(os.path.join(out_dir, f"{name}.svg"), grid,
                              vals, name.replace("_", " "),
                              marks=scene.sensors))
    return paths
