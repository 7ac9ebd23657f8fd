"""Rendering of evaluation results: text tables, CSV, and SVG curve plots.

All output is deterministic text (no timestamps, fixed float formatting),
so identical inputs produce byte-identical report files.
"""

from __future__ import annotations

import math

from fusedet.evaluation import EvalCurve

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def miss_rate_table_text(report: dict[str, dict[str, float]]) -> str:
    """Variants as rows, settings as columns, cells in percent L-AMR."""
    settings: list[str] = []
    for row in report.values():
        for name in row:
            if name not in settings:
                settings.append(name)
    width = max([len("variant")] + [len(v) for v in report])
    header = "variant".ljust(width) + "".join(f"  {s:>12}" for s in settings)
    lines = [header, "-" * len(header)]
    for variant, row in report.items():
        cells = "".join(
            f"  {_pct(row[s]):>12}" if s in row else f"  {'-':>12}" for s in settings
        )
        lines.append(variant.ljust(width) + cells)
    return "\n".join(lines) + "\n"


def miss_rate_table_csv(report: dict[str, dict[str, float]]) -> str:
    lines = ["variant,setting,lamr"]
    for variant, row in report.items():
        for setting, value in row.items():
            lines.append(f"{variant},{setting},{value:.9g}")
    return "\n".join(lines) + "\n"


def _pct(v: float) -> str:
    return f"{100.0 * v:.2f}%"


def curve_csv(c: EvalCurve) -> str:
    lines = ["fppi,miss_rate,threshold"]
    for p in c.points:
        t = "inf" if math.isinf(p.threshold) else f"{p.threshold:.9g}"
        lines.append(f"{p.fppi:.9g},{p.miss_rate:.9g},{t}")
    return "\n".join(lines) + "\n"


def curve_svg(
    curves: dict[str, EvalCurve],
    title: str = "miss rate vs FPPI",
    width: int = 640,
    height: int = 480,
) -> str:
    """Log-log plot of one or more curves; axes span FPPI 1e-3..1e1 and
    miss rate 1e-2..1."""
    x_lo, x_hi = 1e-3, 1e1
    y_lo, y_hi = 1e-2, 1.0
    margin_l, margin_r, margin_t, margin_b = 64, 16, 32, 44
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    def sx(fppi: float) -> float:
        v = min(max(fppi, x_lo), x_hi)
        return margin_l + plot_w * (math.log10(v) - math.log10(x_lo)) / (
            math.log10(x_hi) - math.log10(x_lo)
        )

    def sy(miss: float) -> float:
        v = min(max(miss, y_lo), y_hi)
        return margin_t + plot_h * (math.log10(y_hi) - math.log10(v)) / (
            math.log10(y_hi) - math.log10(y_lo)
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    # decade gridlines with labels
    for e in range(-3, 2):
        x = sx(10.0**e)
        parts.append(
            f'<line x1="{x:.2f}" y1="{margin_t}" x2="{x:.2f}" '
            f'y2="{margin_t + plot_h}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{margin_t + plot_h + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">1e{e}</text>'
        )
    for e in range(-2, 1):
        y = sy(10.0**e)
        parts.append(
            f'<line x1="{margin_l}" y1="{y:.2f}" x2="{margin_l + plot_w}" '
            f'y2="{y:.2f}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{margin_l - 6}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">1e{e}</text>'
        )
    parts.append(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333333"/>'
    )
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">false positives per image</text>'
    )
    parts.append(
        f'<text x="14" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">miss rate</text>'
    )
    for i, (name, c) in enumerate(curves.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(p.fppi):.2f},{sy(p.miss_rate):.2f}" for p in c.points)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = margin_t + 14 + 16 * i
        parts.append(
            f'<line x1="{margin_l + 8}" y1="{ly - 4}" x2="{margin_l + 28}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{margin_l + 34}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
