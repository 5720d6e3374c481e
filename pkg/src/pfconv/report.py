"""Report persistence: CSV tables, JSON mirror, self-contained SVG plots.

Float formatting uses `repr`, i.e. the shortest digit string that
round-trips, so identical studies always serialize to identical bytes.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .convergence import ConvergenceReport
from .errors import DomainError


def _fmt(x: float) -> str:
    return repr(float(x))


def report_csv_text(report: ConvergenceReport) -> str:
    """Normalized-stage moment table, one row per (phi, N, t)."""
    lines = ["phi,N,t,mse,mse_stderr,l4,l4_stderr"]
    ns = report.config.particle_counts
    for phi in report.config.test_functions:
        tab = report.tables["normalized"][phi]
        for n_idx, n in enumerate(ns):
            for t_idx, t in enumerate(report.steps):
                cells = [tab[k][n_idx][t_idx]
                         for k in ("mse", "mse_stderr", "l4", "l4_stderr")]
                if any(isinstance(v, float) and math.isnan(v) for v in cells):
                    continue  # partial flush: skip incomplete cells
                lines.append(f"{phi},{n},{t}," + ",".join(_fmt(v) for v in cells))
    return "\n".join(lines) + "\n"


def report_json_text(report: ConvergenceReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# SVG (hand-rolled: no timestamps, no external assets)

_W, _H, _MARGIN = 640, 440, 56


def _scale(points, xlim, ylim):
    x0, x1 = xlim
    y0, y1 = ylim
    sx = (_W - 2 * _MARGIN) / (x1 - x0 or 1.0)
    sy = (_H - 2 * _MARGIN) / (y1 - y0 or 1.0)
    return [(_MARGIN + (x - x0) * sx, _H - _MARGIN - (y - y0) * sy) for x, y in points]


def _polyline(points, color, dash="") -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1.5"'
            f'{extra} points="{coords}"/>')


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def rate_svg_text(report: ConvergenceReport) -> str:
    """Log-log error curves (mean over steps) with -1 and -2 references."""
    ns = report.config.particle_counts
    xs = [math.log2(n) for n in ns]
    curves = []  # (label, ys)
    for phi in report.config.test_functions:
        tab = report.tables["normalized"][phi]
        for p, key in ((2, "mse"), (4, "l4")):
            if p not in report.config.moments:
                continue
            vals = np.array(tab[key]).mean(axis=1)
            if np.any(~(vals > 0)):
                continue
            curves.append((f"{phi} p={p}", [math.log2(v) for v in vals]))
    if not curves:
        raise DomainError("nothing to plot: no positive error moments")
    all_y = [y for _, ys in curves for y in ys]
    ref1 = [all_y[0] - (x - xs[0]) for x in xs]
    ref2 = [all_y[0] - 2 * (x - xs[0]) for x in xs]
    ylim = (min(all_y + ref1 + ref2) - 0.5, max(all_y + ref1 + ref2) + 0.5)
    xlim = (xs[0] - 0.3, xs[-1] + 0.3)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="{_H - 12}" text-anchor="middle" '
        f'font-size="13">log2 N</text>',
        f'<text x="16" y="{_H / 2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {_H / 2:.0f})">log2 error moment</text>',
    ]
    parts.append(_polyline(_scale(list(zip(xs, ref1)), xlim, ylim), "#999999", dash="6 3"))
    parts.append(_polyline(_scale(list(zip(xs, ref2)), xlim, ylim), "#999999", dash="2 3"))
    for k, (label, ys) in enumerate(curves):
        color = _COLORS[k % len(_COLORS)]
        parts.append(_polyline(_scale(list(zip(xs, ys)), xlim, ylim), color))
        parts.append(f'<text x="{_MARGIN + 6}" y="{_MARGIN + 16 * (k + 1)}" '
                     f'font-size="12" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg_text(edges: np.ndarray, particle_mass: np.ndarray,
                       grid_x: np.ndarray, grid_density: np.ndarray,
                       title: str = "") -> str:
    """Weighted particle histogram (bars) against a grid density (line)."""
    edges = np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    heights = np.asarray(particle_mass, dtype=float) / widths  # mass -> density
    top = max(float(np.max(heights)), float(np.max(grid_density)), 1e-12)
    xlim = (float(edges[0]), float(edges[-1]))
    ylim = (0.0, 1.1 * top)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    for i, h in enumerate(heights):
        (x0, y0), (x1, y1) = _scale([(edges[i], 0.0), (edges[i + 1], h)], xlim, ylim)
        parts.append(f'<rect x="{x0:.2f}" y="{y1:.2f}" width="{x1 - x0:.2f}" '
                     f'height="{y0 - y1:.2f}" fill="#9ecae1" stroke="#6baed6"/>')
    keep = (grid_x >= xlim[0]) & (grid_x <= xlim[1])
    line = _scale(list(zip(grid_x[keep], grid_density[keep])), xlim, ylim)
    parts.append(_polyline(line, "#d62728"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: ConvergenceReport, fmt: str, path) -> None:
    """Persist a study report as csv, json, or svg."""
    if fmt == "csv":
        text = report_csv_text(report)
    elif fmt == "json":
        text = report_json_text(report)
    elif fmt == "svg":
        text = rate_svg_text(report)
    else:
        raise DomainError(f"unknown report format {fmt!r}")
    parent = os.path.dirname(str(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
