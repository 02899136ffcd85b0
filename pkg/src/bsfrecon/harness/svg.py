"""Small dependency-free SVG line and heat-map plots."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_plot", "heat_map"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _scale(v, lo, hi, a, b):
    return a + (b - a) * (0.5 if hi == lo else (v - lo) / (hi - lo))


def line_plot(path: str, series: dict, title: str = "", xlabel: str = "",
              ylabel: str = "", width: int = 560, height: int = 400) -> str:
    """``series`` maps a label to ``(x, y)`` arrays."""
    m = 56
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    y0, y1 = float(np.nanmin(ys)), float(np.nanmax(ys))
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" '
           f'y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>']
    for t in np.linspace(x0, x1, 5):
        px = _scale(t, x0, x1, m, width - m)
        out.append(f'<text x="{px:.1f}" y="{height - m + 15}" '
                   f'text-anchor="middle">{t:.3g}</text>')
    for t in np.linspace(y0, y1, 5):
        py = _scale(t, y0, y1, height - m, m)
        out.append(f'<text x="{m - 5}" y="{py + 4:.1f}" '
                   f'text-anchor="end">{t:.3g}</text>')
    for n, (label, (x, y)) in enumerate(series.items()):
        color = _COLORS[n % len(_COLORS)]
        pts = " ".join(
            f"{_scale(a, x0, x1, m, width - m):.2f},"
            f"{_scale(b, y0, y1, height - m, m):.2f}"
            for a, b in zip(np.asarray(x, float), np.asarray(y, float)))
        out.append(f'<polyline fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{width - m + 4}" y="{m + 14 * n}" '
                   f'fill="{color}">{escape(str(label))}</text>')
    out.append(f'<text x="{width / 2}" y="{m / 2}" text-anchor="middle" '
               f'font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{width / 2}" y="{height - 12}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{height / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {height / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))
    return path


def heat_map(path: str, points, values, title: str = "", cell: int = 8,
             marks=None) -> str:
    """Colour each point of a regular grid; ``marks`` adds black crosses."""
    pts = np.asarray(points, float)
    vals = np.asarray(values, float)
    xs, ys = np.unique(pts[:, 0]), np.unique(pts[:, 1])
    lo, hi = float(np.nanmin(vals)), float(np.nanmax(vals))
    w, h = cell * len(xs), cell * len(ys)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
           f'height="{h + 20}" font-family="sans-serif" font-size="11">',
           f'<text x="2" y="13">{escape(title)}</text>']
    ix = np.searchsorted(xs, pts[:, 0])
    iy = np.searchsorted(ys, pts[:, 1])
    for i, j, v in zip(ix, iy, vals):
        t = 0.5 if hi == lo else (v - lo) / (hi - lo)
        r, b = int(255 * t), int(255 * (1 - t))
        out.append(f'<rect x="{i * cell}" y="{20 + (len(ys) - 1 - j) * cell}" '
                   f'width="{cell}" height="{cell}" fill="rgb({r},64,{b})"/>')
    if marks is not None:
        for mx, my in np.asarray(marks, float):
            px = _scale(mx, xs[0], xs[-1], cell / 2, w - cell / 2)
            py = 20 + _scale(my, ys[0], ys[-1], h - cell / 2, cell / 2)
            out.append(f'<path d="M{px - 3:.1f},{py - 3:.1f}l6,6m0,-6l-6,6" '
                       f'stroke="black"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))
    return path
