"""Self-contained SVG line plots for quick visual checks of CSV outputs."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_plot"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def line_plot(series, xlabel: str = "", ylabel: str = "", title: str = "",
              width: int = 640, height: int = 420) -> str:
    """Render ``series`` as an SVG document.

    Parameters
    ----------
    series : iterable of (label, x, y)
        Non-finite points break the line.
    """
    series = [(str(lab), np.asarray(x, float), np.asarray(y, float)) for lab, x, y in series]
    xs = np.concatenate([s[1][np.isfinite(s[2])] for s in series] or [np.zeros(1)])
    ys = np.concatenate([s[2][np.isfinite(s[2])] for s in series] or [np.zeros(1)])
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    L, R, T, B = 70, 20, 30, 50
    pw, ph = width - L - R, height - T - B

    def px(x):
        return L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return T + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{T + ph}" x2="{px(t):.2f}" y2="{T + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{T + ph + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{L - 4}" y1="{py(t):.2f}" x2="{L}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{L + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{T + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {T + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{L + pw / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for k, (lab, x, y) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pieces, cur = [], []
        for xi, yi in zip(x, y):
            if np.isfinite(yi):
                cur.append(f"{px(xi):.2f},{py(yi):.2f}")
            elif cur:
                pieces.append(cur)
                cur = []
        if cur:
            pieces.append(cur)
        for pts in pieces:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{" ".join(pts)}"/>')
        if len(series) <= 8 and lab:
            out.append(f'<text x="{L + pw - 6}" y="{T + 14 + 13 * k}" text-anchor="end" fill="{color}">'
                       f'{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
