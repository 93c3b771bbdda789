"""Self-contained SVG charts drawn from plain numeric data.

No timestamps or external references are emitted, so the same inputs
always produce byte-identical files.
"""

from __future__ import annotations

from typing import Sequence

_WIDTH = 640
_HEIGHT = 400
_MARGIN = 60

_CLASS_COLORS = {0: "#4477aa", 1: "#cc3311"}


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{_escape(title)}</text>',
    ]


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def bar_chart(labels: Sequence[str], values: Sequence[float], title: str) -> str:
    """Horizontal bar chart, one bar per label, longest bar spans the plot."""
    parts = _header(title)
    n = max(len(labels), 1)
    vmax = max(list(values) + [1e-12])
    band = (_HEIGHT - 2 * _MARGIN) / n
    plot_w = _WIDTH - 2 * _MARGIN - 100
    for i, (label, value) in enumerate(zip(labels, values)):
        y = _MARGIN + i * band
        w = plot_w * (value / vmax)
        parts.append(f'<rect x="{_MARGIN + 100}" y="{y + band * 0.15:.2f}" width="{w:.2f}" height="{band * 0.7:.2f}" fill="#4477aa"/>')
        parts.append(
            f'<text x="{_MARGIN + 95}" y="{y + band * 0.62:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{_escape(str(label))}</text>'
        )
        parts.append(
            f'<text x="{_MARGIN + 104 + w:.2f}" y="{y + band * 0.62:.2f}" font-family="sans-serif" font-size="11">{value:g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _scaled(xs, ys):
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN
    px = [_MARGIN + plot_w * (x - x_lo) / x_span for x in xs]
    py = [_HEIGHT - _MARGIN - plot_h * (y - y_lo) / y_span for y in ys]
    return px, py, (x_lo, x_hi, y_lo, y_hi)


def _axes(parts: list[str], bounds, xlabel: str, ylabel: str) -> None:
    x_lo, x_hi, y_lo, y_hi = bounds
    parts.append(
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" y2="{_HEIGHT - _MARGIN}" stroke="black"/>'
    )
    parts.append(f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_HEIGHT - _MARGIN}" stroke="black"/>')
    parts.append(
        f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 16}" text-anchor="middle" font-family="sans-serif" font-size="12">'
        f"{_escape(xlabel)} [{x_lo:g}, {x_hi:g}]</text>"
    )
    parts.append(
        f'<text x="18" y="{_HEIGHT / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {_HEIGHT / 2:.1f})">{_escape(ylabel)} [{y_lo:g}, {y_hi:g}]</text>'
    )


def line_chart(xs: Sequence[float], ys: Sequence[float], title: str, xlabel: str = "x", ylabel: str = "y") -> str:
    """Single polyline with axes."""
    parts = _header(title)
    px, py, bounds = _scaled(xs, ys)
    _axes(parts, bounds, xlabel, ylabel)
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
    parts.append(f'<polyline points="{points}" fill="none" stroke="#cc3311" stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_chart(
    xs: Sequence[float], ys: Sequence[float], classes: Sequence[int], title: str, xlabel: str = "x", ylabel: str = "y"
) -> str:
    """One point per row, colored by binary class."""
    parts = _header(title)
    px, py, bounds = _scaled(xs, ys)
    _axes(parts, bounds, xlabel, ylabel)
    for x, y, c in zip(px, py, classes):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{_CLASS_COLORS[int(c)]}" fill-opacity="0.7"/>')
    parts.append(
        f'<text x="{_WIDTH - _MARGIN}" y="{_MARGIN}" text-anchor="end" font-family="sans-serif" font-size="11">'
        f'<tspan fill="{_CLASS_COLORS[0]}">class 0</tspan>  <tspan fill="{_CLASS_COLORS[1]}">class 1</tspan></text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_chart(grid: Sequence[Sequence[float]], title: str, row_label: str = "unit", col_label: str = "position") -> str:
    """Grayscale cell grid; darker means larger magnitude."""
    parts = _header(title)
    rows = len(grid)
    cols = max(len(r) for r in grid) if rows else 1
    vmax = max((abs(v) for r in grid for v in r), default=0.0) or 1.0
    cw = (_WIDTH - 2 * _MARGIN) / cols
    ch = (_HEIGHT - 2 * _MARGIN) / max(rows, 1)
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            shade = int(255 - 215 * min(abs(v) / vmax, 1.0))
            parts.append(
                f'<rect x="{_MARGIN + j * cw:.2f}" y="{_MARGIN + i * ch:.2f}" width="{cw:.2f}" height="{ch:.2f}" '
                f'fill="rgb({shade},{shade},{shade})" stroke="#dddddd" stroke-width="0.5"/>'
            )
    parts.append(
        f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 16}" text-anchor="middle" font-family="sans-serif" font-size="12">'
        f"{_escape(col_label)}</text>"
    )
    parts.append(
        f'<text x="18" y="{_HEIGHT / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {_HEIGHT / 2:.1f})">{_escape(row_label)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
