"""Self-contained SVG scatter and line charts."""
from __future__ import annotations

from dataclasses import dataclass, field
from html import escape
from typing import Optional, Sequence

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = dict(left=80, right=30, top=50, bottom=70)
PAD = 0.05

COLORS = ("#1f4e9c", "#000000", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555")


def _range(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        span = abs(lo) or 1.0
        lo, hi = lo - 0.5 * span, hi + 0.5 * span
    pad = PAD * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 1e-9 * step, step)]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    _series: list = field(default_factory=list)

    def scatter(self, xs, ys, label: str = "", marker: str = "dot", labels: Optional[Sequence[str]] = None):
        self._series.append(("scatter", np.asarray(xs, float), np.asarray(ys, float), label, marker, labels))
        return self

    def line(self, xs, ys, label: str = "", dashed: bool = False):
        self._series.append(("line", np.asarray(xs, float), np.asarray(ys, float), label, dashed, None))
        return self

    def fit_line(self, xs, ys, label: str = "least squares"):
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        slope, intercept = np.polyfit(xs, ys, 1)
        grid = np.array([xs.min(), xs.max()])
        return self.line(grid, slope * grid + intercept, label)

    def render(self) -> str:
        if not self._series:
            raise ValueError("chart has no data")
        all_x = np.concatenate([s[1] for s in self._series])
        all_y = np.concatenate([s[2] for s in self._series])
        finite = np.isfinite(all_x) & np.isfinite(all_y)
        x0, x1 = _range(all_x[finite])
        y0, y1 = _range(all_y[finite])
        left, top = MARGIN["left"], MARGIN["top"]
        pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

        def px(x):
            return left + (x - x0) / (x1 - x0) * pw

        def py(y):
            return top + ph - (y - y0) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="28" text-anchor="middle" font-size="16">{escape(self.title)}</text>',
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        ]
        for t in _ticks(x0, x1):
            X = px(t)
            out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{X:.2f}" y="{top + ph + 20}" text-anchor="middle">{_fmt(t)}</text>')
        for t in _ticks(y0, y1):
            Y = py(t)
            out.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        out.append(
            f'<text x="{left + pw / 2}" y="{HEIGHT - 20}" text-anchor="middle">{escape(self.xlabel)}</text>'
        )
        out.append(
            f'<text x="20" y="{top + ph / 2}" text-anchor="middle" '
            f'transform="rotate(-90 20 {top + ph / 2})">{escape(self.ylabel)}</text>'
        )

        legend = []
        for k, (kind, xs, ys, label, style, labels) in enumerate(self._series):
            color = COLORS[k % len(COLORS)]
            ok = np.isfinite(xs) & np.isfinite(ys)
            if kind == "line":
                pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs[ok], ys[ok]))
                dash = ' stroke-dasharray="6,4"' if style else ""
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
            else:
                for j, (x, y) in enumerate(zip(xs, ys)):
                    if not (np.isfinite(x) and np.isfinite(y)):
                        continue
                    X, Y = px(x), py(y)
                    if style == "star":
                        out.append(f'<text x="{X:.2f}" y="{Y + 5:.2f}" text-anchor="middle" fill="{color}">*</text>')
                    else:
                        out.append(f'<circle cx="{X:.2f}" cy="{Y:.2f}" r="3.5" fill="{color}"/>')
                    if labels is not None:
                        out.append(f'<text x="{X + 6:.2f}" y="{Y - 6:.2f}" font-size="10">{escape(labels[j])}</text>')
            if label:
                legend.append((label, color))
        for k, (label, color) in enumerate(legend):
            y = top + 16 + 16 * k
            out.append(f'<rect x="{left + pw - 150}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{left + pw - 135}" y="{y}">{escape(label)}</text>')
        out.append("</svg>\n")
        return "\n".join(out)
