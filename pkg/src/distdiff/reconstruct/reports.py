"""Report writers: deterministic JSON and CSV, and small static SVG plots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")
SIZE = 480
MARGIN = 40


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


class _Canvas:
    """Maps data coordinates into a square SVG viewport."""

    def __init__(self, points: np.ndarray, title: str):
        pts = np.asarray(points, float).reshape(-1, 2)
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        lo = pts.min(axis=0) if len(pts) else np.zeros(2)
        hi = pts.max(axis=0) if len(pts) else np.ones(2)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        self.lo, self.scale = lo, (SIZE - 2 * MARGIN) / span
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
            f'viewBox="0 0 {SIZE} {SIZE}">',
            f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>',
            f'<text x="{MARGIN}" y="{MARGIN // 2 + 4}" font-family="sans-serif" '
            f'font-size="13">{_escape(title)}</text>',
        ]

    def xy(self, p) -> tuple[float, float]:
        q = (np.asarray(p, float) - self.lo) * self.scale
        return MARGIN + q[0], SIZE - MARGIN - q[1]

    def dots(self, pts, color: str, r: float = 1.6) -> None:
        for p in np.asarray(pts, float).reshape(-1, 2):
            x, y = self.xy(p)
            self.parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>')

    def line(self, pts, color: str, width: float = 1.2) -> None:
        pts = np.asarray(pts, float).reshape(-1, 2)
        if len(pts) < 2:
            return
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in (self.xy(p) for p in pts))
        self.parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"/>')

    def label(self, text: str, k: int, color: str) -> None:
        self.parts.append(f'<text x="{SIZE - 150}" y="{MARGIN + 14 * k}" font-family="sans-serif" '
                          f'font-size="11" fill="{color}">{_escape(text)}</text>')

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.parts + ["</svg>"]) + "\n")


def _escape(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_scatter(path, points, title: str = "", highlight=None) -> None:
    """Scatter plot; ``highlight`` indices are drawn larger in a second colour."""
    c = _Canvas(points, title)
    c.dots(points, "#888888")
    if highlight is not None and len(highlight):
        c.dots(np.asarray(points)[np.asarray(highlight)], PALETTE[1], r=3.0)
    c.save(path)


def svg_overlay(path, background, groups, curves=(), title: str = "") -> None:
    """Point groups in distinct colours over a grey cloud, with optional polylines."""
    allpts = [np.asarray(background, float).reshape(-1, 2)]
    allpts += [np.asarray(g, float).reshape(-1, 2) for g in groups]
    c = _Canvas(np.concatenate(allpts), title)
    c.dots(background, "#cccccc", r=1.0)
    for k, g in enumerate(groups):
        c.dots(g, PALETTE[k % len(PALETTE)], r=2.2)
    for k, curve in enumerate(curves):
        c.line(curve, PALETTE[k % len(PALETTE)], width=0.8)
    c.save(path)


def svg_series(path, series: dict, title: str = "") -> None:
    """Line plot of named ``(x, y)`` series."""
    stacked = [np.column_stack([np.asarray(x, float), np.asarray(y, float)])
               for x, y in series.values()]
    c = _Canvas(np.concatenate(stacked) if stacked else np.zeros((1, 2)), title)
    for k, (name, xy) in enumerate(zip(series, stacked)):
        color = PALETTE[k % len(PALETTE)]
        c.line(xy, color)
        c.label(name, k, color)
    c.save(path)
