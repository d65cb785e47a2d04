"""Self-contained SVG line charts, one polyline per forecast source."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

# Fixed palette keeps chart bytes deterministic across runs.
_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 56, 16, 34, 44


def line_chart_svg(
    title: str,
    x_labels: list[str],
    series: dict[str, list[float]],
    y_label: str = "rainfall (mm)",
    width: int = 880,
    height: int = 440,
) -> str:
    """Render named series over shared x positions. NaN points are skipped."""
    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B
    finite = [
        v for vals in series.values() for v in vals if v is not None and math.isfinite(v)
    ]
    lo = min(finite + [0.0]) if finite else 0.0
    hi = max(finite) if finite else 1.0
    if hi <= lo:
        hi = lo + 1.0
    n = max((len(v) for v in series.values()), default=1)

    def x_at(i: int) -> float:
        return _MARGIN_L + (plot_w * i / max(n - 1, 1))

    def y_at(v: float) -> float:
        return _MARGIN_T + plot_h * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="15">'
        f"{escape(title)}</text>",
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" '
        f'y2="{_MARGIN_T + plot_h}" stroke="black"/>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T + plot_h}" '
        f'x2="{_MARGIN_L + plot_w}" y2="{_MARGIN_T + plot_h}" stroke="black"/>',
        f'<text x="12" y="{_MARGIN_T + plot_h / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 12 {_MARGIN_T + plot_h / 2:.0f})">{escape(y_label)}</text>',
        f'<text x="{_MARGIN_L - 6}" y="{y_at(lo) + 4:.1f}" text-anchor="end">{lo:g}</text>',
        f'<text x="{_MARGIN_L - 6}" y="{y_at(hi) + 4:.1f}" text-anchor="end">{hi:g}</text>',
    ]
    if x_labels:
        step = max(1, len(x_labels) // 8)
        for i in range(0, len(x_labels), step):
            parts.append(
                f'<text x="{x_at(i):.1f}" y="{height - 22}" text-anchor="middle" '
                f'font-size="10">{escape(x_labels[i])}</text>'
            )

    for k, (name, values) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        points = " ".join(
            f"{x_at(i):.2f},{y_at(v):.2f}"
            for i, v in enumerate(values)
            if v is not None and math.isfinite(v)
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{points}"/>'
        )
        lx = _MARGIN_L + 8 + 130 * (k % 6)
        ly = height - 6 - 14 * (k // 6)
        parts.append(f'<rect x="{lx}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{lx + 14}" y="{ly}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
