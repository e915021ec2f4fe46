"""Minimal SVG line plots (polyline plus axes) with deterministic output."""

from __future__ import annotations

import math

import numpy as np

W, H = 640, 360
ML, MR, MT, MB = 64, 16, 28, 40
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
MAX_POINTS = 2000


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _range(vals):
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        return 0.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if hi - lo <= 1e-300 * max(1.0, abs(lo)) or hi == lo:
        pad = 0.5 if lo == 0 else 0.05 * abs(lo)
        return lo - pad, hi + pad
    return lo, hi


def line_plot(t, series: dict, title: str = "", xlabel: str = "t") -> str:
    """SVG document with one polyline per entry of ``series`` (label -> values)."""
    t = np.asarray(t, dtype=float)
    step = max(1, int(math.ceil(t.shape[0] / MAX_POINTS)))
    idx = np.unique(np.concatenate([np.arange(0, t.shape[0], step), [t.shape[0] - 1]]))
    t = t[idx]
    ys = {k: np.asarray(v, dtype=float)[idx] for k, v in series.items()}
    x0, x1 = _range(t)
    y0, y1 = _range(np.concatenate(list(ys.values())) if ys else np.zeros(1))
    pw, ph = W - ML - MR, H - MT - MB

    def sx(v):
        return ML + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return MT + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{ML}" y1="{MT + ph}" x2="{ML + pw}" y2="{MT + ph}" stroke="black"/>',
           f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{MT + ph}" stroke="black"/>']
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        out.append(f'<text x="{_fmt(sx(xv))}" y="{MT + ph + 16}" text-anchor="middle" font-size="11">{_fmt(xv)}</text>')
        out.append(f'<text x="{ML - 6}" y="{_fmt(sy(yv) + 4)}" text-anchor="end" font-size="11">{_fmt(yv)}</text>')
    out.append(f'<text x="{ML + pw / 2}" y="{H - 6}" text-anchor="middle" font-size="12">{xlabel}</text>')
    for j, (label, y) in enumerate(ys.items()):
        ok = np.isfinite(y)
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(t[ok], y[ok]))
        color = COLORS[j % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{ML + pw - 4}" y="{MT + 14 + 14 * j}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
