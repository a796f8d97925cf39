"""Tiny deterministic SVG charts: line plots and grouped histograms.

Hand-rolled so that identical inputs always produce identical bytes; the
files are self-contained (no fonts, scripts, or external assets).
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH = 640
HEIGHT = 420
MARGIN_LEFT = 64
MARGIN_RIGHT = 20
MARGIN_TOP = 40
MARGIN_BOTTOM = 52

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(value: float) -> str:
    if value == 0:
        value = 0.0
    text = f"{value:.6g}"
    return "0" if text == "-0" else text


def _ticks(lo: float, hi: float, count: int = 5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return list(np.linspace(lo, hi, count)), lo, hi


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="24" font-family="sans-serif" font-size="15" '
            f'text-anchor="middle">{escape(title)}</text>',
            f'<text x="{(MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2}" y="{HEIGHT - 12}" '
            f'font-family="sans-serif" font-size="12" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="16" y="{(MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2}" '
            f'font-family="sans-serif" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 16 {(MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2})">'
            f"{escape(ylabel)}</text>",
        ]

    def axes(self, x_lo, x_hi, y_lo, y_hi):
        x_ticks, self.x_lo, self.x_hi = _ticks(x_lo, x_hi)
        y_ticks, self.y_lo, self.y_hi = _ticks(y_lo, y_hi)
        x0, y0 = MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM
        x1, y1 = WIDTH - MARGIN_RIGHT, MARGIN_TOP
        self.parts.append(
            f'<path d="M {x0} {y1} L {x0} {y0} L {x1} {y0}" fill="none" stroke="black"/>'
        )
        for tx in x_ticks:
            px = self.px(tx)
            self.parts.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 4}" stroke="black"/>')
            self.parts.append(
                f'<text x="{_fmt(px)}" y="{y0 + 18}" font-family="sans-serif" font-size="10" '
                f'text-anchor="middle">{_fmt(tx)}</text>'
            )
        for ty in y_ticks:
            py = self.py(ty)
            self.parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
            self.parts.append(
                f'<text x="{x0 - 7}" y="{_fmt(py + 3)}" font-family="sans-serif" font-size="10" '
                f'text-anchor="end">{_fmt(ty)}</text>'
            )

    def px(self, x: float) -> float:
        span = self.x_hi - self.x_lo
        frac = 0.0 if span == 0 else (x - self.x_lo) / span
        return MARGIN_LEFT + frac * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    def py(self, y: float) -> float:
        span = self.y_hi - self.y_lo
        frac = 0.0 if span == 0 else (y - self.y_lo) / span
        return HEIGHT - MARGIN_BOTTOM - frac * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)

    def legend(self, labels):
        for i, label in enumerate(labels):
            y = MARGIN_TOP + 14 + 16 * i
            x = WIDTH - MARGIN_RIGHT - 150
            color = PALETTE[i % len(PALETTE)]
            self.parts.append(
                f'<line x1="{x}" y1="{y - 4}" x2="{x + 22}" y2="{y - 4}" stroke="{color}" stroke-width="2"/>'
            )
            self.parts.append(
                f'<text x="{x + 28}" y="{y}" font-family="sans-serif" font-size="11">{escape(label)}</text>'
            )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_chart(series, *, title: str, xlabel: str = "", ylabel: str = "") -> str:
    """Render labelled (xs, ys) series as polylines.

    Args:
        series: iterable of (label, xs, ys) triples.
    """
    series = [(str(label), list(map(float, xs)), list(map(float, ys))) for label, xs, ys in series]
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    canvas = _Canvas(title, xlabel, ylabel)
    canvas.axes(min(all_x), max(all_x), min(all_y), max(all_y))
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(canvas.px(x))},{_fmt(canvas.py(y))}" for x, y in zip(xs, ys))
        canvas.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    canvas.legend([label for label, _, _ in series])
    return canvas.render()


def histogram_chart(groups, *, bins: int = 25, title: str, xlabel: str = "", ylabel: str = "") -> str:
    """Render overlapping histograms with shared bin edges.

    Args:
        groups: iterable of (label, values) pairs.
    """
    groups = [(str(label), np.asarray(list(values), dtype=np.float64)) for label, values in groups]
    all_values = np.concatenate([v for _, v in groups if v.size]) if groups else np.empty(0)
    if all_values.size == 0:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = float(all_values.min()), float(all_values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts = [np.histogram(v, bins=edges)[0] for _, v in groups]
    canvas = _Canvas(title, xlabel, ylabel)
    canvas.axes(lo, hi, 0.0, float(max(c.max() for c in counts)) if counts else 1.0)
    for i, (label, _) in enumerate(groups):
        color = PALETTE[i % len(PALETTE)]
        for b in range(bins):
            c = int(counts[i][b])
            if c == 0:
                continue
            x_left = canvas.px(edges[b])
            x_right = canvas.px(edges[b + 1])
            y_top = canvas.py(float(c))
            y_base = canvas.py(0.0)
            canvas.parts.append(
                f'<rect x="{_fmt(x_left)}" y="{_fmt(y_top)}" width="{_fmt(x_right - x_left)}" '
                f'height="{_fmt(y_base - y_top)}" fill="{color}" fill-opacity="0.45"/>'
            )
    canvas.legend([label for label, _ in groups])
    return canvas.render()
