"""
Experiment configuration: presets, YAML ingestion and validation.

A configuration is a nested key/value tree.  Values are resolved in three
layers: a named preset (optional), a user document, then command-line
overrides.  Any key that is not part of the schema is rejected.
"""

from __future__ import annotations

import copy
import csv
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from ..field import SensorScene, TemporalModel
from ..stochastic import CovKernel, RngStream
from ..warping import BernoulliThreshold, warp_from_dict

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "load_config",
           "build_scene", "read_points_csv"]


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


_KNN_GRID = [1, 3, 5, 7, 9, 11, 13, 15]

_TUKEY = {"family": "TukeyGH", "g": 0.1, "h": 0.4, "loc": 1.0, "scale": 1.0}

_EXP1 = {
    "seed": 2023,
    "alpha": 0.1,
    "realizations": 100,
    "output_dir": "out",
    "scene": {
        "grid": {"x": [-5.0, 5.0], "y": [-5.0, 5.0], "n": [50, 50]},
        "sensors": {"placement": "random_grid", "n_p": 125, "n_i": 125},
        "spatial": {"kernel": {"family": "SquaredExponential", "scale": 1.0,
                               "length_scale": 0.5},
                    "mean": 0.0},
        "threshold": {"pi": 0.5},
        "h0": {"kernel": {"family": "Matern12", "length_scale": 1.0},
               "warp": dict(_TUKEY)},
        "h1": {"kernel": {"family": "Matern52", "length_scale": 1.0},
               "warp": dict(_TUKEY)},
        "T": 20.0, "M": 50, "K": 50,
        "sigma_p": 0.1, "sigma_i": 0.1,
        "substeps": 50,
    },
    "calibration": {"R": 10000, "seed": 11},
    "nlrt": {"J": 10000, "delta": 0.1, "epsilon": 0.1,
             "summary": {"kind": "ACF", "lags": [1, 2, 3, 4]},
             "distance": "euclidean", "standardize": False},
    "baselines": {"oracle": True, "knn": True, "knn_k_grid": list(_KNN_GRID),
                  "knn_folds": 5},
    "reference": {
        "use": False,
        "p": {"log_gamma": 178.1392, "U": [[0.8938, 0.1062], [0.1684, 0.8316]]},
        "i": {"log_gamma": -0.4659, "U": [[0.8962, 0.1038], [0.1468, 0.8532]]},
    },
    "sweep": {"axis": "noise_sigma", "values": [0.5, 0.2, 0.1, 0.05, 0.01],
              "mode": "pipeline", "realizations": 20},
}

_EXP2 = copy.deepcopy(_EXP1)
_EXP2["scene"]["M"] = 64
_EXP2["scene"]["K"] = 64
_EXP2["calibration"]["R"] = 2000
_EXP2["sweep"] = {"axis": "K_intervals",
                  "values": [10, 20, 30, 40, 50, 64, 70, 80, 90, 100, 110, 120, 130],
                  "mode": "roc", "realizations": 20}

_NEA = {
    "seed": 2012,
    "alpha": 0.1,
    "realizations": 100,
    "output_dir": "out",
    "scene": {
        "grid": {"x": [103.6, 104.05], "y": [1.21, 1.48], "n": [50, 50]},
        "sensors": {"placement": "csv",
                    "p_csv": "builtin:nea_placeholder_stations.csv",
                    "n_i": 0},
        "spatial": {"kernel": {"family": "Matern52", "scale": 5.3068,
                               "length_scale": 0.0344},
                    "mean": 75.0566},
        "threshold": {"c": 75.3692},
        "h0": {"kernel": {"family": "Matern52", "length_scale": 3.7622},
               "warp": {"family": "Gamma", "a": 53.7457, "b": 0.1771,
                        "post_map": [10.0, -1.0]}},
        "h1": {"kernel": {"family": "Matern52", "length_scale": 4.0654},
               "warp": {"family": "Gamma", "a": 43.3694, "b": 0.2417,
                        "post_map": [10.0, -1.0]}},
        "T": 133.0, "M": 133, "K": 1,
        "sigma_p": 0.1, "sigma_i": 0.1,
        "substeps": 50,
    },
    "calibration": {"R": 10000, "seed": 11},
    "nlrt": copy.deepcopy(_EXP1["nlrt"]),
    "baselines": copy.deepcopy(_EXP1["baselines"]),
    "reference": {
        "use": False,
        "p": {"log_gamma": -6.5387, "U": [[0.8996, 0.1004], [0.0774, 0.9226]]},
    },
    "sweep": {"axis": "alpha", "values": [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
              "mode": "pipeline", "realizations": 20},
}

PRESETS = {"exp1_synthetic": _EXP1, "exp2_sensitivity": _EXP2,
           "nea_fitted": _NEA}

# keys whose values are free-form sub-documents validated by constructors
_OPEN = {("scene", "spatial", "kernel"), ("scene", "h0", "kernel"),
         ("scene", "h0", "warp"), ("scene", "h1", "kernel"),
         ("scene", "h1", "warp"), ("nlrt", "summary"),
         ("reference", "p"), ("reference", "i")}

_SCHEMA = {
    "preset": None, "seed": None, "alpha": None, "realizations": None,
    "output_dir": None, "threads": None,
    "scene": {
        "grid": {"x": None, "y": None, "n": None, "csv": None},
        "sensors": {"placement": None, "n_p": None, "n_i": None,
                    "p_csv": None, "i_csv": None, "p_locations": None,
                    "i_locations": None},
        "spatial": {"kernel": None, "mean": None},
        "threshold": {"c": None, "pi": None},
        "h0": {"kernel": None, "warp": None},
        "h1": {"kernel": None, "warp": None},
        "T": None, "M": None, "K": None, "sigma_p": None, "sigma_i": None,
        "substeps": None,
    },
    "calibration": {"R": None, "seed": None},
    "nlrt": {"J": None, "delta": None, "epsilon": None, "summary": None,
             "distance": None, "standardize": None},
    "baselines": {"oracle": None, "knn": None, "knn_k_grid": None,
                  "knn_folds": None},
    "reference": {"use": None, "p": None, "i": None},
    "sweep": {"axis": None, "values": None, "mode": None,
              "realizations": None},
}


def _check_keys(doc, schema, path=()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{'.'.join(path) or 'config'} must be a mapping")
    for key, value in doc.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {'.'.join(path + (key,))!r}")
        sub = schema[key]
        if isinstance(sub, dict) and path + (key,) not in _OPEN:
            if value is not None:
                _check_keys(value, sub, path + (key,))


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) \
                and key not in ("kernel", "warp", "summary"):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _locate(path: str, base_dir: str | None) -> str:
    if path.startswith("builtin:"):
        return str(resources.files("bsfrecon.data") / path[len("builtin:"):])
    if base_dir and not os.path.isabs(path):
        return os.path.join(base_dir, path)
    return path


def read_points_csv(path: str) -> np.ndarray:
    """Read ``x, y`` columns from a CSV file; ``#`` lines are comments."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(
                line for line in fh if not line.lstrip().startswith("#"))]
    except OSError as exc:
        raise ConfigError(f"cannot read points file {path!r}: {exc}") from exc
    try:
        return np.array([[float(r["x"]), float(r["y"])] for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path!r} needs numeric x and y columns") from exc


@dataclass
class ExperimentConfig:
    """Validated configuration tree plus the directory it was read from."""

    tree: dict
    base_dir: str | None = None

    def __getitem__(self, key):
        return self.tree[key]

    @property
    def seed(self) -> int:
        return int(self.tree["seed"])

    @property
    def alpha(self) -> float:
        return float(self.tree["alpha"])

    @property
    def realizations(self) -> int:
        return int(self.tree["realizations"])

    @property
    def output_dir(self) -> str:
        return str(self.tree.get("output_dir", "out"))

    def with_overrides(self, **flat) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"scene.K": 64}``."""
        tree = copy.deepcopy(self.tree)
        for dotted, value in flat.items():
            node = tree
            keys = dotted.split(".")
            for k in keys[:-1]:
                node = node.setdefault(k, {})
            node[keys[-1]] = value
        return validate(tree, self.base_dir)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.tree, sort_keys=False)


def _positive(tree, dotted, kind=float, minimum=None):
    """Fetch a number; require ``> 0`` or, with ``minimum``, ``>= minimum``."""
    node = tree
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"missing config key {dotted!r}")
        node = node[k]
    try:
        v = kind(node)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{dotted} must be a number, got {node!r}") from exc
    if (v <= 0) if minimum is None else (v < minimum):
        raise ConfigError(f"{dotted} out of range: {v}")
    return v


def validate(tree: dict, base_dir: str | None = None) -> ExperimentConfig:
    _check_keys(tree, _SCHEMA)
    _positive(tree, "realizations", int, 1)
    a = _positive(tree, "alpha")
    if not a < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    for key in ("scene.T", "scene.sigma_p", "scene.sigma_i", "nlrt.delta",
                "nlrt.epsilon"):
        _positive(tree, key)
    for key, lo in (("scene.M", 1), ("scene.K", 1), ("scene.substeps", 2),
                    ("calibration.R", 100), ("nlrt.J", 1)):
        _positive(tree, key, int, lo)
    if tree["nlrt"].get("distance", "euclidean") != "euclidean":
        raise ConfigError("only the euclidean distance is supported")
    sw = tree.get("sweep") or {}
    if sw.get("axis") not in (None, "noise_sigma", "K_intervals", "M_points",
                              "alpha"):
        raise ConfigError(f"unknown sweep axis {sw.get('axis')!r}")
    if sw.get("mode") not in (None, "roc", "pipeline"):
        raise ConfigError(f"unknown sweep mode {sw.get('mode')!r}")
    cfg = ExperimentConfig(tree, base_dir)
    build_scene(cfg)  # surfaces every scene-level error early
    return cfg


def load_config(path: str | None = None, preset: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    """Resolve preset, file and overrides into a validated configuration."""
    doc = {}
    base_dir = None
    if path is not None:
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path!r}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a mapping")
        base_dir = os.path.dirname(os.path.abspath(path))
        _check_keys(doc, _SCHEMA)
    name = preset or doc.get("preset") or "exp1_synthetic"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from "
                          f"{sorted(PRESETS)}")
    tree = _merge(PRESETS[name], doc)
    tree["preset"] = name
    for key, value in (overrides or {}).items():
        if value is not None:
            tree[key] = value
    return validate(tree, base_dir)


def _grid(spec, base_dir):
    if spec.get("csv"):
        return read_points_csv(_locate(spec["csv"], base_dir))
    try:
        (x0, x1), (y0, y1) = spec["x"], spec["y"]
        nx, ny = (int(v) for v in spec["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("scene.grid needs x, y ranges and n = [nx, ny]") from exc
    if nx < 1 or ny < 1:
        raise ConfigError("grid sizes must be positive")
    xs, ys = np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def _sensors(spec, grid, seed, base_dir):
    placement = spec.get("placement", "random_grid")
    if placement == "random_grid":
        n_p, n_i = int(spec.get("n_p", 0)), int(spec.get("n_i", 0))
        if n_p < 0 or n_i < 0 or n_p + n_i > len(grid):
            raise ConfigError("sensor counts must fit on the grid")
        gen = RngStream(seed, stream_id=0x5E45).generator()
        idx = gen.choice(len(grid), size=n_p + n_i, replace=False)
        return grid[idx[:n_p]], grid[idx[n_p:]]
    if placement == "csv":
        p = (read_points_csv(_locate(spec["p_csv"], base_dir))
             if spec.get("p_csv") else np.empty((0, 2)))
        i = (read_points_csv(_locate(spec["i_csv"], base_dir))
             if spec.get("i_csv") else np.empty((0, 2)))
        return p, i
    if placement == "explicit":
        p = np.asarray(spec.get("p_locations") or [], dtype=float).reshape(-1, 2)
        i = np.asarray(spec.get("i_locations") or [], dtype=float).reshape(-1, 2)
        return p, i
    raise ConfigError(f"unknown sensor placement {placement!r}")


def _temporal(spec, name):
    try:
        kd = dict(spec["kernel"])
        kd.setdefault("scale", 1.0)
        return TemporalModel(CovKernel.from_dict(kd), warp_from_dict(spec["warp"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid temporal model {name}: {exc}") from exc


def build_scene(cfg: ExperimentConfig) -> SensorScene:
    s = cfg.tree["scene"]
    grid = _grid(s["grid"], cfg.base_dir)
    p, i = _sensors(s["sensors"], grid, cfg.seed, cfg.base_dir)
    try:
        kernel = CovKernel.from_dict(s["spatial"]["kernel"])
        th = s["threshold"]
        if th.get("c") is not None:
            threshold = BernoulliThreshold(float(th["c"]))
        else:
            threshold = BernoulliThreshold.from_probability(float(th["pi"]))
        return SensorScene(grid, p, i, kernel, float(s["spatial"]["mean"]),
                           threshold, _temporal(s["h0"], "h0"),
                           _temporal(s["h1"], "h1"), float(s["T"]),
                           int(s["M"]), int(s["K"]), float(s["sigma_p"]),
                           float(s["sigma_i"]), int(s["substeps"]))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scene: {exc}") from exc
