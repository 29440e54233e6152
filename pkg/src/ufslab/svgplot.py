"""Tiny dependency-free SVG scatter plots for the experiment reports.

One plot style only: theory value on the x axis, trained/estimated value
on the y axis, with the ``y = x`` reference line.  Enough to eyeball the
per-coordinate agreement the experiments quantify in their JSON summaries.
"""

from __future__ import annotations

import numpy as np

_W, _H, _PAD = 420, 420, 48


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, n)
    return [float(t) for t in raw]


def scatter_svg(theory, trained, title: str, xlabel: str = "theory",
                ylabel: str = "trained", labels=None) -> str:
    """Render a theory-vs-trained scatter with a y=x line; returns SVG text."""
    x = np.asarray(theory, dtype=float).reshape(-1)
    y = np.asarray(trained, dtype=float).reshape(-1)
    both = np.concatenate([x, y]) if x.size else np.array([0.0, 1.0])
    lo, hi = float(both.min()), float(both.max())
    span = hi - lo
    if span <= 0:
        span = max(abs(hi), 1.0)
    lo -= 0.08 * span
    hi += 0.08 * span

    def px(v):
        return _PAD + (v - lo) / (hi - lo) * (_W - 2 * _PAD)

    def py(v):
        return _H - _PAD - (v - lo) / (hi - lo) * (_H - 2 * _PAD)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        # axes
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" '
        f'y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" '
        f'stroke="black"/>',
        # y = x reference
        f'<line x1="{px(lo):.1f}" y1="{py(lo):.1f}" x2="{px(hi):.1f}" '
        f'y2="{py(hi):.1f}" stroke="#888" stroke-dasharray="5,4"/>',
    ]
    for t in _ticks(lo, hi):
        parts.append(f'<text x="{px(t):.1f}" y="{_H - _PAD + 16:.1f}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="9">{t:.3g}</text>')
        parts.append(f'<text x="{_PAD - 6:.1f}" y="{py(t) + 3:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="9">{t:.3g}</text>')
    parts.append(f'<text x="{_W / 2:.0f}" y="{_H - 10}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11">{xlabel}</text>')
    parts.append(f'<text x="14" y="{_H / 2:.0f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11" '
                 f'transform="rotate(-90 14 {_H / 2:.0f})">{ylabel}</text>')
    for i in range(x.size):
        parts.append(f'<circle cx="{px(x[i]):.1f}" cy="{py(y[i]):.1f}" '
                     f'r="3.5" fill="#1f6fb2" fill-opacity="0.75"/>')
        if labels is not None:
            parts.append(f'<text x="{px(x[i]) + 5:.1f}" '
                         f'y="{py(y[i]) - 5:.1f}" font-family="sans-serif" '
                         f'font-size="8">{labels[i]}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
