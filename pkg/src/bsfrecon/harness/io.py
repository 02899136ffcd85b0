"""CSV helpers.  Every float is written with 9 significant digits."""

from __future__ import annotations

import csv
import os

import numpy as np

__all__ = ["fmt", "write_csv", "write_field_csv", "read_decisions_csv"]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def write_csv(path: str, header, rows) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_field_csv(path: str, points, values) -> str:
    """``x, y, value`` rows for a field sampled at ``points``."""
    pts = np.asarray(points, dtype=float)
    return write_csv(path, ["x", "y", "value"],
                     ([p[0], p[1], v] for p, v in zip(pts, values)))


def read_decisions_csv(path: str, n: int) -> np.ndarray:
    """Decision bits from ``sensor_id, bit`` rows; every sensor must appear."""
    out = np.full(n, -1, dtype=np.int8)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sid, bit = int(row["sensor_id"]), int(row["bit"])
            if not 0 <= sid < n:
                raise ValueError(f"sensor_id {sid} outside [0, {n})")
            if bit not in (0, 1):
                raise ValueError(f"decision for sensor {sid} is not a bit")
            out[sid] = bit
    if np.any(out < 0):
        raise ValueError("decisions file does not cover every sensor")
    return out
