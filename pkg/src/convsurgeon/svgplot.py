"""Static SVG charts assembled by string, no plotting dependency.

Two chart kinds cover the reporting needs: a per-layer divergence line
chart (one curve per traced input plus a parameters curve) and a square
heatmap of pairwise discrepancy rates. Output is deterministic: fixed
geometry, fixed palette, fixed float formatting, no timestamps.
"""

from __future__ import annotations

import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
PARAM_COLOR = "#000000"

_FLOOR = 1e-12  # zeros sit on the bottom gridline of the log axis


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _decade_label(exp: int) -> str:
    return "1" if exp == 0 else f"1e{exp:+03d}"


def layer_curves_svg(positions, input_series, param_series=None,
                     title="Per-layer mean |difference|") -> str:
    """Line chart over aligned-pair positions, log10 y axis.

    input_series: list of (name, values) where values aligns with
    positions and may contain None for pairs with no numeric entry
    (shape-mismatched activations leave gaps, not zeros).
    param_series: optional (name, values) drawn black and dashed.
    """
    width, height = 760.0, 420.0
    left, right, top, bottom = 70.0, 190.0, 46.0, 52.0
    plot_w = width - left - right
    plot_h = height - top - bottom

    series = list(input_series)
    if param_series is not None:
        series.append(param_series)
    finite = [v for _, values in series for v in values
              if v is not None and math.isfinite(v)]
    hi = max([v for v in finite if v > 0.0], default=1.0)
    exp_lo = int(math.floor(math.log10(_FLOOR)))
    exp_hi = max(int(math.ceil(math.log10(hi))), exp_lo + 1)

    def tx(i: int) -> float:
        if len(positions) == 1:
            return left + plot_w / 2.0
        return left + plot_w * i / (len(positions) - 1)

    def ty(v: float) -> float:
        e = math.log10(max(v, _FLOOR))
        frac = (e - exp_lo) / (exp_hi - exp_lo)
        return top + plot_h * (1.0 - frac)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}" '
        f'font-family="monospace" font-size="11">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="#ffffff"/>',
        f'<text x="{_fmt(left)}" y="24" font-size="14">{_esc(title)}</text>',
    ]

    for exp in range(exp_lo, exp_hi + 1):
        y = ty(10.0 ** exp)
        parts.append(f'<line x1="{_fmt(left)}" y1="{_fmt(y)}" '
                     f'x2="{_fmt(left + plot_w)}" y2="{_fmt(y)}" '
                     f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(left - 8)}" y="{_fmt(y + 4)}" '
                     f'text-anchor="end">{_decade_label(exp)}</text>')

    step = max(1, (len(positions) + 15) // 16)
    for i, pos in enumerate(positions):
        if i % step and i != len(positions) - 1:
            continue
        x = tx(i)
        parts.append(f'<line x1="{_fmt(x)}" y1="{_fmt(top + plot_h)}" '
                     f'x2="{_fmt(x)}" y2="{_fmt(top + plot_h + 5)}" '
                     f'stroke="#333333" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{_fmt(top + plot_h + 18)}" '
                     f'text-anchor="middle">{_esc(pos)}</text>')
    parts.append(f'<text x="{_fmt(left + plot_w / 2)}" '
                 f'y="{_fmt(height - 12)}" text-anchor="middle">'
                 f'aligned pair position</text>')

    parts.append(f'<rect x="{_fmt(left)}" y="{_fmt(top)}" '
                 f'width="{_fmt(plot_w)}" height="{_fmt(plot_h)}" '
                 f'fill="none" stroke="#333333" stroke-width="1"/>')

    legend_x = left + plot_w + 14.0
    legend_y = top + 6.0
    for si, (name, values) in enumerate(series):
        is_param = param_series is not None and si == len(series) - 1
        color = PARAM_COLOR if is_param else PALETTE[si % len(PALETTE)]
        dash = ' stroke-dasharray="6,3"' if is_param else ""
        run: list[str] = []
        segments: list[list[str]] = []
        for i, v in enumerate(values):
            if v is None or not math.isfinite(v):
                if run:
                    segments.append(run)
                    run = []
                continue
            run.append(f"{_fmt(tx(i))},{_fmt(ty(v))}")
        if run:
            segments.append(run)
        for seg in segments:
            if len(seg) == 1:
                x, y = seg[0].split(",")
                parts.append(f'<circle cx="{x}" cy="{y}" r="2.5" '
                             f'fill="{color}"/>')
            else:
                parts.append(f'<polyline points="{" ".join(seg)}" '
                             f'fill="none" stroke="{color}" '
                             f'stroke-width="1.5"{dash}/>')
        ly = legend_y + 16.0 * si
        parts.append(f'<line x1="{_fmt(legend_x)}" y1="{_fmt(ly)}" '
                     f'x2="{_fmt(legend_x + 22)}" y2="{_fmt(ly)}" '
                     f'stroke="{color}" stroke-width="1.5"{dash}/>')
        parts.append(f'<text x="{_fmt(legend_x + 28)}" y="{_fmt(ly + 4)}">'
                     f'{_esc(name)}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _heat_color(rate: float) -> str:
    # white at 0 to deep red at 1
    r = max(0.0, min(1.0, rate))
    red = round(255 - r * (255 - 178))
    grn = round(255 - r * (255 - 24))
    blu = round(255 - r * (255 - 43))
    return f"#{red:02x}{grn:02x}{blu:02x}"


def rate_heatmap_svg(labels, matrix, title="Pairwise top-1 discrepancy rate") -> str:
    """Square grid: cell (i, j) shows the discrepancy rate between model
    i and model j, colored white (0) to red (1)."""
    n = len(labels)
    cell = 56.0
    left, top = 110.0, 70.0
    width = left + n * cell + 20.0
    height = top + n * cell + 20.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}" '
        f'font-family="monospace" font-size="11">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="#ffffff"/>',
        f'<text x="{_fmt(left)}" y="24" font-size="14">{_esc(title)}</text>',
    ]
    for j, label in enumerate(labels):
        x = left + j * cell + cell / 2.0
        parts.append(f'<text x="{_fmt(x)}" y="{_fmt(top - 10)}" '
                     f'text-anchor="middle">{_esc(str(label)[:9])}</text>')
    for i, label in enumerate(labels):
        y = top + i * cell + cell / 2.0 + 4.0
        parts.append(f'<text x="{_fmt(left - 8)}" y="{_fmt(y)}" '
                     f'text-anchor="end">{_esc(str(label)[:14])}</text>')
    for i in range(n):
        for j in range(n):
            rate = float(matrix[i][j])
            x = left + j * cell
            y = top + i * cell
            parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" '
                         f'width="{_fmt(cell)}" height="{_fmt(cell)}" '
                         f'fill="{_heat_color(rate)}" stroke="#999999" '
                         f'stroke-width="0.5"/>')
            text_fill = "#ffffff" if rate >= 0.5 else "#000000"
            parts.append(f'<text x="{_fmt(x + cell / 2)}" '
                         f'y="{_fmt(y + cell / 2 + 4)}" '
                         f'text-anchor="middle" fill="{text_fill}">'
                         f'{rate:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
