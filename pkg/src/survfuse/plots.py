"""Minimal self-contained SVG emitters for the KM and gate-weight plots.

Hand-rolled rather than pulling in a plotting library so that identical
inputs produce byte-identical files.
"""

from __future__ import annotations

from .stats import KmCurve

_WIDTH, _HEIGHT = 640, 420
_MARGIN = 60
LOW_COLOR = "#1f77b4"  # blue
HIGH_COLOR = "#ff7f0e"  # orange


def _fmt(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]


def _axes() -> list[str]:
    x0, y0 = _MARGIN, _HEIGHT - _MARGIN
    x1, y1 = _WIDTH - _MARGIN, _MARGIN
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]


def km_svg(low: KmCurve, high: KmCurve, p_value: float) -> str:
    """Step-function KM curves, low risk in blue and high risk in orange,
    annotated with the log-rank p-value."""
    t_max = max(
        [1.0]
        + [float(t) for t in low.times]
        + [float(t) for t in high.times]
    )
    x0, y0 = _MARGIN, _HEIGHT - _MARGIN
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN

    def px(t):
        return x0 + (t / t_max) * plot_w

    def py(s):
        return y0 - s * plot_h

    def path(curve: KmCurve) -> str:
        d = [f"M {_fmt(px(0))} {_fmt(py(1.0))}"]
        s_prev = 1.0
        for t, s in zip(curve.times, curve.survival):
            d.append(f"L {_fmt(px(float(t)))} {_fmt(py(s_prev))}")
            d.append(f"L {_fmt(px(float(t)))} {_fmt(py(float(s)))}")
            s_prev = float(s)
        d.append(f"L {_fmt(px(t_max))} {_fmt(py(s_prev))}")
        return " ".join(d)

    parts = _header("Kaplan-Meier survival by risk group")
    parts += _axes()
    parts.append(f'<path d="{path(low)}" fill="none" stroke="{LOW_COLOR}" stroke-width="2"/>')
    parts.append(f'<path d="{path(high)}" fill="none" stroke="{HIGH_COLOR}" stroke-width="2"/>')
    parts.append(
        f'<text x="{x0 + 10}" y="{_MARGIN + 20}" font-size="14" font-family="sans-serif">'
        f"log-rank p = {p_value:.4g}</text>"
    )
    legend_y = _MARGIN + 44
    parts.append(
        f'<rect x="{x0 + 10}" y="{legend_y - 10}" width="12" height="12" fill="{LOW_COLOR}"/>'
        f'<text x="{x0 + 28}" y="{legend_y}" font-size="12" font-family="sans-serif">low risk</text>'
    )
    parts.append(
        f'<rect x="{x0 + 10}" y="{legend_y + 10}" width="12" height="12" fill="{HIGH_COLOR}"/>'
        f'<text x="{x0 + 28}" y="{legend_y + 20}" font-size="12" font-family="sans-serif">high risk</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def gate_bars_svg(weights) -> str:
    """Bar chart of the cohort-averaged gate weights (one bar per expert)."""
    weights = [float(w) for w in weights]
    n = len(weights)
    total = sum(weights)
    x0, y0 = _MARGIN, _HEIGHT - _MARGIN
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN
    w_max = max(max(weights), 1e-9)
    bar_w = plot_w / (2 * n)
    parts = _header("Average gate weights per expert")
    parts += _axes()
    for i, w in enumerate(weights):
        cx = x0 + plot_w * (i + 0.5) / n
        h = plot_h * (w / w_max)
        parts.append(
            f'<rect x="{_fmt(cx - bar_w / 2)}" y="{_fmt(y0 - h)}" width="{_fmt(bar_w)}" '
            f'height="{_fmt(h)}" fill="{HIGH_COLOR}"/>'
        )
        parts.append(
            f'<text x="{_fmt(cx)}" y="{y0 + 18}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif">E{i + 1}</text>'
        )
        parts.append(
            f'<text x="{_fmt(cx)}" y="{_fmt(y0 - h - 6)}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif">{w:.4f}</text>'
        )
    parts.append(
        f'<text x="{x0 + 10}" y="{_MARGIN + 20}" font-size="14" font-family="sans-serif">'
        f"sum = {total:.6f}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
