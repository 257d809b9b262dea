"""Minimal self-contained SVG charts (no plotting dependency).

Two chart kinds cover the benchmark outputs: log-scale line charts for
error curves and an event raster (one cross per broadcast) for trigger
activity.
"""

from __future__ import annotations

import numpy as np

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 36, 52
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, n)
    return raw


def _svg_header(title: str):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _axes(parts, x_lo, x_hi, y_lo, y_hi, xlabel, ylabel, logy):
    x0, x1 = _ML, _W - _MR
    y0, y1 = _H - _MB, _MT
    parts.append(
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
        'fill="none" stroke="black"/>'
    )
    for v in _ticks(x_lo, x_hi):
        px = x0 + (v - x_lo) / (x_hi - x_lo) * (x1 - x0)
        parts.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle">{v:.3g}</text>'
        )
    for v in _ticks(y_lo, y_hi):
        py = y0 - (v - y_lo) / (y_hi - y_lo) * (y0 - y1)
        label = f"1e{v:.0f}" if logy else f"{v:.3g}"
        parts.append(f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end">{label}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2})">{ylabel}</text>'
    )
    return (x0, x1, y0, y1)


def line_chart(series, path, title="", xlabel="t", ylabel="error", logy=True):
    """Write a line chart; series is a list of (label, x, y) triples.

    With logy the y data are plotted as log10 (values clipped at 1e-16).
    """
    if not series:
        raise ValueError("need at least one series")
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if logy:
        ys = np.log10(np.maximum(np.abs(ys), 1e-16))
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    parts = _svg_header(title)
    x0, x1, y0, y1 = _axes(parts, x_lo, x_hi, y_lo, y_hi, xlabel, ylabel, logy)

    for idx, (label, sx, sy) in enumerate(series):
        sx = np.asarray(sx, dtype=float)
        sy = np.asarray(sy, dtype=float)
        if logy:
            sy = np.log10(np.maximum(np.abs(sy), 1e-16))
        px = x0 + (sx - x_lo) / (x_hi - x_lo) * (x1 - x0)
        py = y0 - (sy - y_lo) / (y_hi - y_lo) * (y0 - y1)
        color = _COLORS[idx % len(_COLORS)]
        if len(px) == 1:
            parts.append(
                f'<circle cx="{px[0]:.1f}" cy="{py[0]:.1f}" r="3" fill="{color}"/>'
            )
        else:
            pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        parts.append(
            f'<text x="{x1 - 8}" y="{y1 + 16 + 16 * idx}" text-anchor="end" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def event_raster(events, n_agents: int, horizon: float, path, title="trigger events"):
    """One cross per (time, agent) broadcast event."""
    parts = _svg_header(title)
    x0, x1, y0, y1 = _axes(
        parts, 0.0, max(horizon, 1e-9), 0.5, n_agents + 0.5, "t", "agent", False
    )
    for t, agent, _kind in events:
        px = x0 + t / max(horizon, 1e-9) * (x1 - x0)
        py = y0 - (agent + 1 - 0.5) / n_agents * (y0 - y1)
        parts.append(
            f'<path d="M {px - 3:.1f} {py - 3:.1f} L {px + 3:.1f} {py + 3:.1f} '
            f'M {px - 3:.1f} {py + 3:.1f} L {px + 3:.1f} {py - 3:.1f}" '
            'stroke="#1f77b4" stroke-width="1"/>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
