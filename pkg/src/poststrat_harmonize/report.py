"""Static SVG figures and text tables from a summary CSV.

One figure per (condition, metric).  Panels are laid out with one row per
``p_nb_male`` value and one column per estimator; inside a panel each
(target, method) pair gets a horizontal line showing the mean as a marker
and the 2.5%-97.5% quantile range as a segment.  Representation sets the
marker shape and colour.
"""

from __future__ import annotations

import os
from xml.sax.saxutils import escape

import numpy as np

METRICS = {
    "bias": ("mean_bias", "bias_q025", "bias_q975", "Bias"),
    "width": ("mean_width", "width_q025", "width_q975", "Interval width"),
}

STYLE = {"under": ("#1f77b4", "circle"), "over": ("#d62728", "triangle")}
_FALLBACK = ("#555555", "square")

LABEL_W = 230
PANEL_W = 240
ROW_H = 13
PAD = 28
HEADER = 46


def _order(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def _nice_range(lo, hi):
    if not np.isfinite(lo) or not np.isfinite(hi):
        return -1.0, 1.0
    if hi <= lo:
        half = max(abs(lo) * 0.1, 0.5)
        return lo - half, hi + half
    span = hi - lo
    return lo - 0.05 * span, hi + 0.05 * span


def _marker(shape, x, y, color, title, cls="point"):
    t = f"<title>{escape(title)}</title>"
    c = f' class="{cls}"'
    if shape == "triangle":
        pts = f"{x:.2f},{y - 4:.2f} {x - 4:.2f},{y + 3:.2f} {x + 4:.2f},{y + 3:.2f}"
        return f'<polygon{c} points="{pts}" fill="{color}">{t}</polygon>'
    if shape == "square":
        return f'<rect{c} x="{x - 3:.2f}" y="{y - 3:.2f}" width="6" height="6" fill="{color}">{t}</rect>'
    return f'<circle{c} cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="{color}">{t}</circle>'


def figure_svg(rows, condition, metric) -> str:
    """SVG text for one condition and metric (``"bias"`` or ``"width"``)."""
    mean_key, lo_key, hi_key, axis_label = METRICS[metric]
    ps = sorted(_order(r.p_nb_male for r in rows))
    estimators = _order(r.estimator for r in rows)
    categories = _order((r.target, r.method) for r in rows)
    reps = _order(r.representation for r in rows)
    lo = min(getattr(r, lo_key) for r in rows)
    hi = max(getattr(r, hi_key) for r in rows)
    if metric == "bias":
        lo, hi = min(lo, 0.0), max(hi, 0.0)
    xmin, xmax = _nice_range(lo, hi)

    panel_h = ROW_H * len(categories) + 16
    width = LABEL_W + PANEL_W * len(estimators) + PAD * (len(estimators) + 1)
    height = HEADER + (panel_h + PAD) * len(ps) + 40
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="10">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">'
        f'{escape(condition)}: {escape(axis_label.lower())}</text>',
    ]
    for j, est in enumerate(estimators):
        x0 = LABEL_W + PAD + j * (PANEL_W + PAD)
        out.append(f'<text x="{x0 + PANEL_W / 2:.1f}" y="36" text-anchor="middle" '
                   f'font-size="11">{escape(est)}</text>')

    def sx(v, x0):
        return x0 + (v - xmin) / (xmax - xmin) * PANEL_W

    index = {(r.p_nb_male, r.estimator, r.target, r.method, r.representation): r for r in rows}
    for i, p in enumerate(ps):
        y0 = HEADER + i * (panel_h + PAD)
        out.append(f'<text x="8" y="{y0 - 4:.1f}" font-size="11">p_nb_male = {p:g}</text>')
        for k, (target, method) in enumerate(categories):
            cy = y0 + 8 + k * ROW_H + ROW_H / 2
            out.append(f'<text x="{LABEL_W + PAD - 6}" y="{cy + 3:.1f}" text-anchor="end">'
                       f'{escape(target)} / {escape(method)}</text>')
        for j, est in enumerate(estimators):
            x0 = LABEL_W + PAD + j * (PANEL_W + PAD)
            out.append(f'<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{panel_h}" '
                       f'fill="none" stroke="#999"/>')
            if metric == "bias" and xmin < 0 < xmax:
                zx = sx(0.0, x0)
                out.append(f'<line x1="{zx:.2f}" y1="{y0}" x2="{zx:.2f}" y2="{y0 + panel_h}" '
                           f'stroke="#bbb" stroke-dasharray="3,3"/>')
            for k, (target, method) in enumerate(categories):
                for m, rep in enumerate(reps):
                    r = index.get((p, est, target, method, rep))
                    if r is None:
                        continue
                    color, shape = STYLE.get(rep, _FALLBACK)
                    cy = y0 + 8 + k * ROW_H + ROW_H / 2 + (m - (len(reps) - 1) / 2) * 4
                    a, b, c = sx(getattr(r, lo_key), x0), sx(getattr(r, hi_key), x0), \
                        sx(getattr(r, mean_key), x0)
                    out.append(f'<line class="segment" x1="{a:.2f}" y1="{cy:.2f}" x2="{b:.2f}" y2="{cy:.2f}" '
                               f'stroke="{color}" stroke-width="1.2"/>')
                    out.append(_marker(shape, c, cy, color,
                                       f"{target} {method} {rep}: {getattr(r, mean_key):.4g}"))
        yb = y0 + panel_h
        for j in range(len(estimators)):
            x0 = LABEL_W + PAD + j * (PANEL_W + PAD)
            for tick in np.linspace(xmin, xmax, 5):
                tx = sx(tick, x0)
                out.append(f'<line x1="{tx:.2f}" y1="{yb}" x2="{tx:.2f}" y2="{yb + 3}" '
                           f'stroke="#999"/>')
                out.append(f'<text x="{tx:.2f}" y="{yb + 13}" text-anchor="middle" '
                           f'font-size="8">{tick:.3g}</text>')
    ly = height - 14
    for m, rep in enumerate(reps):
        color, shape = STYLE.get(rep, _FALLBACK)
        lx = LABEL_W + PAD + m * 110
        out.append(_marker(shape, lx, ly - 3, color, rep, cls="legend"))
        out.append(f'<text x="{lx + 8}" y="{ly}">{escape(rep)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def figure_table(rows, condition, metric) -> str:
    mean_key, lo_key, hi_key, axis_label = METRICS[metric]
    head = ("p_nb_male", "estimator", "representation", "target", "method",
            axis_label.lower(), "q025", "q975", "n")
    body = []
    for r in sorted(rows, key=lambda r: (r.p_nb_male, r.estimator, r.representation,
                                        r.target, r.method)):
        body.append((f"{r.p_nb_male:g}", r.estimator, r.representation, r.target, r.method,
                     f"{getattr(r, mean_key):.4f}", f"{getattr(r, lo_key):.4f}",
                     f"{getattr(r, hi_key):.4f}", str(r.n_effective)))
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    lines = [f"{condition}: {axis_label.lower()}",
             "  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines) + "\n"


def write_report(summary, out_dir, metrics=tuple(METRICS)) -> list:
    """Write ``<condition>_<metric>.svg`` and ``.txt`` per condition and metric.

    Returns the SVG paths.
    """
    summary = list(summary)
    if not summary:
        raise ValueError("summary is empty")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for condition in _order(r.condition for r in summary):
        rows = [r for r in summary if r.condition == condition]
        for metric in metrics:
            stem = os.path.join(out_dir, f"{condition}_{metric}")
            with open(stem + ".svg", "w", encoding="utf-8") as fh:
                fh.write(figure_svg(rows, condition, metric))
            with open(stem + ".txt", "w", encoding="utf-8") as fh:
                fh.write(figure_table(rows, condition, metric))
            paths.append(stem + ".svg")
    return paths
