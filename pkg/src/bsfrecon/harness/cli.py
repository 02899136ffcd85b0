"""
Command-line entry point.

Usage::

    bsfrecon [--seed N] [--threads N] [--config FILE] [--out DIR] COMMAND ...

Commands are ``calibrate``, ``simulate``, ``reconstruct``, ``roc``,
``experiment`` and ``sweep``.  Exit status is 0 on success, 2 for a
configuration error and 3 for a numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from ..field import export_realization_csv, realize
from ..sblue import sblue_offline, sblue_predict
from ..stochastic import RngStream
from ..warping import DomainError
from ..wgplrt import NonConvergence
from .config import ConfigError, load_config, build_scene
from .io import read_decisions_csv, write_csv, write_field_csv
from .pipeline import (REAL_STREAM, calibrate_scene, decide_sensors,
                       load_calibrations, run_pipeline, write_calibrations)
from .sweep import AXES, sweep
from .svg import heat_map

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default,
                        help="master seed (overrides the config)")
    parser.add_argument("--threads", type=int, default=default,
                        help="worker threads for realizations")
    parser.add_argument("--config", default=default,
                        help="YAML experiment configuration")
    parser.add_argument("--out", default=default, help="output directory")


def _scene_flags(parser):
    parser.add_argument("--preset", default=None,
                        help="exp1_synthetic, exp2_sensitivity or nea_fitted")
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--realizations", type=int, default=None)
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="dotted-path override, e.g. scene.K=64")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsfrecon",
        description="Reconstruct a binary spatial field from one-bit "
                    "sensor decisions.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        _scene_flags(p)
        return p

    add("calibrate", "fit both tests and store thresholds and channels")
    p = add("simulate", "draw one realization and write it as CSV")
    p.add_argument("--index", type=int, default=0,
                   help="realization index (selects the random stream)")
    p = add("reconstruct", "S-BLUE reconstruction from stored calibration")
    p.add_argument("--calibration", default=None,
                   help="directory written by 'calibrate' (default: --out)")
    p.add_argument("--decisions", default=None,
                   help="CSV of sensor_id,bit; simulated when omitted")
    p.add_argument("--index", type=int, default=0)
    add("roc", "calibrate and report ROC curves and AUC")
    add("experiment", "full pipeline with baselines and metrics")
    p = add("sweep", "one-parameter sensitivity sweep")
    p.add_argument("--axis", choices=sorted(AXES), default=None)
    p.add_argument("--values", default=None,
                   help="comma-separated axis values")
    p.add_argument("--mode", choices=("roc", "pipeline"), default=None)
    return parser


def _overrides(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse value for {key}: {exc}") from exc
    return out


def _config(args):
    cfg = load_config(args.config, args.preset,
                      {"seed": args.seed, "alpha": args.alpha,
                       "realizations": args.realizations,
                       "output_dir": args.out, "threads": args.threads})
    extra = _overrides(args.set)
    return cfg.with_overrides(**extra) if extra else cfg


def _print_rows(rows):
    print(f"{'algorithm':<8} {'MSE':>8} {'F1':>8} {'FPR':>8} {'TPR':>8}")
    for r in rows:
        print(f"{r.algorithm:<8} {r.mse:8.4f} {r.f1:8.4f} {r.fpr:8.4f} "
              f"{r.tpr:8.4f}")


def _print_calibration(cal):
    for name, c in (("WGPLRT", cal.p), ("NLRT", cal.i)):
        if c is None:
            continue
        U = c.transition
        print(f"{name}: threshold {c.threshold:.6g}  log gamma "
              f"{c.log_gamma:.6g}  U = [[{U.p00:.4f}, {U.p01:.4f}], "
              f"[{U.p10:.4f}, {U.p11:.4f}]]  AUC {c.roc.auc:.4f}")


def _run(args) -> int:
    cfg = _config(args)
    out = cfg.output_dir
    threads = int(cfg.tree.get("threads") or 1)
    cmd = args.command
    if cmd in ("calibrate", "roc"):
        scene = build_scene(cfg)
        cal = calibrate_scene(scene, cfg)
        write_calibrations(out, cal)
        _print_calibration(cal)
    elif cmd == "simulate":
        scene = build_scene(cfg)
        real = realize(scene, RngStream(cfg.seed, REAL_STREAM).spawn(args.index))
        for path in export_realization_csv(real, out):
            print(path)
    elif cmd == "reconstruct":
        scene = build_scene(cfg)
        cal = load_calibrations(args.calibration or out, scene, cfg)
        if args.decisions:
            bits = read_decisions_csv(args.decisions, scene.n_sensors)
        else:
            real = realize(scene,
                           RngStream(cfg.seed, REAL_STREAM).spawn(args.index))
            bits = decide_sensors(scene, cal, real)
            write_field_csv(os.path.join(out, "field_true.csv"), scene.grid,
                            real.y_grid)
        offline = sblue_offline(scene.sensors, scene.grid,
                                scene.spatial_kernel, scene.spatial_mean,
                                scene.threshold.c, cal.transitions(scene))
        pred = sblue_predict(offline, bits)
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, "decisions.csv"), ["sensor_id", "bit"],
                  enumerate(bits.tolist()))
        write_field_csv(os.path.join(out, "field_pred.csv"), scene.grid,
                        pred.y_hat)
        write_field_csv(os.path.join(out, "risk.csv"), scene.grid,
                        offline.bayes_risk)
        heat_map(os.path.join(out, "field_pred.svg"), scene.grid, pred.y_hat,
                 "field pred", marks=scene.sensors)
        print(f"reconstructed {len(scene.grid)} points from "
              f"{scene.n_sensors} decisions")
    elif cmd == "experiment":
        res = run_pipeline(cfg, out, threads)
        _print_calibration(res.calibrations)
        _print_rows(res.rows)
    elif cmd == "sweep":
        values = None
        if args.values:
            values = [float(v) for v in args.values.split(",")]
        rows = sweep(cfg, args.axis, values, args.mode, out, threads)
        for v, metric, mean, se in rows:
            print(f"{v:>10g} {metric:<14} {mean:10.5f} {se:10.5f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, NonConvergence, DomainError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
