"""Three-panel SVG line chart of an aggregate table.

Panel A: RRMSE and RAE. Panel B: the nine coefficients with raw latent
scores. Panel C: the same coefficients with percentile-rank latent scores.
Output depends only on the table, so reruns give identical bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

from .assoc import BATTERY
from .experiment import BENCHMARKS, AggregateTable

WIDTH = 900
PANEL_HEIGHT = 300
PLOT_LEFT, PLOT_RIGHT = 70, 700
PLOT_TOP, PLOT_BOTTOM = 30, 255
LEGEND_X = 715

COLORS = {
    "RRMSE": "#1b9e77",
    "RAE": "#d95f02",
    # scalar coefficients of determination, correlation and sigma
    "R2_measure": "#1f78b4",
    "R2_predict": "#a6cee3",
    "Corr2": "#6a3d9a",
    "Sigma": "#cab2d6",
    # coefficient T
    "T_measure": "#e31a1c",
    "T_predict": "#fb9a99",
    # multivariate measures
    "MI": "#33a02c",
    "W_measure": "#b15928",
    "W_predict": "#ff7f00",
}
DASHES = {"R2_predict": "6 3", "T_predict": "6 3", "W_predict": "6 3", "Sigma": "2 2", "RAE": "6 3"}


def _num(x: float) -> str:
    return f"{x:.2f}"


def _panel(table: AggregateTable, title: str, condition: str, metrics, offset: int, m_values):
    out = [f'<g transform="translate(0,{offset})">']
    out.append(f'<text x="{PLOT_LEFT}" y="18" font-size="14" font-weight="bold">{escape(title)}</text>')
    out.append(
        f'<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{PLOT_RIGHT - PLOT_LEFT}" '
        f'height="{PLOT_BOTTOM - PLOT_TOP}" fill="none" stroke="#444"/>'
    )
    lo, hi = (min(m_values), max(m_values)) if m_values else (0, 1)
    span = hi - lo

    def sx(m):
        if span == 0:
            return (PLOT_LEFT + PLOT_RIGHT) / 2
        return PLOT_LEFT + (m - lo) / span * (PLOT_RIGHT - PLOT_LEFT)

    def sy(v):
        v = min(1.0, max(0.0, v))
        return PLOT_BOTTOM - v * (PLOT_BOTTOM - PLOT_TOP)

    for k in range(5):
        v = k / 4
        y = sy(v)
        out.append(f'<line x1="{PLOT_LEFT - 4}" y1="{_num(y)}" x2="{PLOT_LEFT}" y2="{_num(y)}" stroke="#444"/>')
        out.append(f'<text x="{PLOT_LEFT - 8}" y="{_num(y + 4)}" font-size="10" text-anchor="end">{v:.2f}</text>')
    for m in m_values:
        x = sx(m)
        out.append(f'<line x1="{_num(x)}" y1="{PLOT_BOTTOM}" x2="{_num(x)}" y2="{PLOT_BOTTOM + 4}" stroke="#444"/>')
        out.append(f'<text x="{_num(x)}" y="{PLOT_BOTTOM + 16}" font-size="10" text-anchor="middle">{m}</text>')
    out.append(
        f'<text x="{(PLOT_LEFT + PLOT_RIGHT) // 2}" y="{PLOT_BOTTOM + 32}" font-size="11" '
        f'text-anchor="middle">test length m</text>'
    )

    drawn = 0
    for metric in metrics:
        ms, means = table.series(condition, metric)
        if not ms:
            continue
        color = COLORS[metric]
        dash = f' stroke-dasharray="{DASHES[metric]}"' if metric in DASHES else ""
        if len(ms) == 1:
            out.append(
                f'<circle cx="{_num(sx(ms[0]))}" cy="{_num(sy(means[0]))}" r="3.5" '
                f'fill="{color}" data-series="{metric}"/>'
            )
        else:
            pts = " ".join(f"{_num(sx(m))},{_num(sy(v))}" for m, v in zip(ms, means))
            out.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"{dash} '
                f'data-series="{metric}"/>'
            )
        ly = PLOT_TOP + 8 + drawn * 20
        out.append(
            f'<line x1="{LEGEND_X}" y1="{ly}" x2="{LEGEND_X + 24}" y2="{ly}" stroke="{color}" '
            f'stroke-width="2"{dash}/>'
        )
        out.append(f'<text x="{LEGEND_X + 30}" y="{ly + 4}" font-size="11">{escape(metric)}</text>')
        drawn += 1
    if drawn == 0:
        out.append(
            f'<text x="{(PLOT_LEFT + PLOT_RIGHT) // 2}" y="{(PLOT_TOP + PLOT_BOTTOM) // 2}" '
            f'font-size="12" text-anchor="middle" fill="#888">no data</text>'
        )
    out.append("</g>")
    return out


def render_svg(table: AggregateTable) -> str:
    m_values = table.m_values
    bench_condition = "raw" if "raw" in table.conditions else (table.conditions or ["raw"])[0]
    panels = [
        ("A. Benchmarks", bench_condition, BENCHMARKS),
        ("B. Reliability, latent scores = LVs", "raw", tuple(BATTERY)),
        ("C. Reliability, latent scores = percentile ranks", "percentile", tuple(BATTERY)),
    ]
    height = PANEL_HEIGHT * len(panels)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">',
        f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
    ]
    for k, (title, condition, metrics) in enumerate(panels):
        lines.extend(_panel(table, title, condition, metrics, k * PANEL_HEIGHT, m_values))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(table: AggregateTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_svg(table))
