"""Minimal deterministic SVG line charts for importance and RMSE series."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 400
MARGIN = dict(left=60, right=170, top=30, bottom=40)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
          "#7f7f7f", "#bcbd22", "#17becf")


class PlotError(ValueError):
    pass


def _num(x: float) -> str:
    return f"{x:.2f}"


def render_svg(lines: Sequence, markers: Sequence[float] = (), title: str = "",
               xlabel: str = "time", ylabel: str = "importance") -> str:
    """SVG source for ``(label, x, y)`` line triples; ``markers`` draw vertical dashes."""
    lines = [(str(lab), np.asarray(x, float), np.asarray(y, float)) for lab, x, y in lines]
    if not lines or any(len(x) == 0 for _, x, _ in lines):
        raise PlotError("nothing to plot")
    xs = np.concatenate([x for _, x, _ in lines] + [np.asarray(markers, float)])
    ys = np.concatenate([y for _, _, y in lines])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{_num(px(xv))}" y="{HEIGHT - MARGIN["bottom"] + 16}" '
                   f'text-anchor="middle" font-size="11">{xv:.4g}</text>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_num(py(yv) + 4)}" '
                   f'text-anchor="end" font-size="11">{yv:.3g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 6}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {MARGIN["top"] + ph / 2})">{escape(ylabel)}</text>')
    for m in markers:
        out.append(f'<line class="marker" x1="{_num(px(m))}" y1="{MARGIN["top"]}" '
                   f'x2="{_num(px(m))}" y2="{MARGIN["top"] + ph}" stroke="gray" '
                   'stroke-dasharray="4 3"/>')
    for i, (label, x, y) in enumerate(lines):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN["top"] + 14 + 16 * i
        lx = WIDTH - MARGIN["right"] + 10
        out.append(f'<line class="legend" x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_plot(lines: Sequence, path, markers: Sequence[float] = (), **kwargs) -> Path:
    path = Path(path)
    svg = render_svg(lines, markers, **kwargs)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path


def lines_from_importance_rows(header: Sequence[str], rows: Sequence[Sequence[str]]):
    """Group importance CSV rows into one line per (variable, method, block size).

    Forecast-time labels are mapped to positions ``1..n`` in order of first
    appearance when they are not integers; the label list is returned too.
    """
    idx = {h: i for i, h in enumerate(header)}
    for col in ("variable", "method", "block_size", "forecast_time", "importance"):
        if col not in idx:
            raise PlotError(f"importance CSV lacks column {col!r}")
    labels = sorted({r[idx["forecast_time"]] for r in rows}, key=_label_key)
    pos = {lab: i + 1 for i, lab in enumerate(labels)}
    numeric = all(lab.isdigit() for lab in labels)
    groups: dict = {}
    for r in rows:
        key = f'{r[idx["variable"]]} {r[idx["method"]]} b={r[idx["block_size"]]}'
        t = r[idx["forecast_time"]]
        groups.setdefault(key, ([], []))
        groups[key][0].append(int(t) if numeric else pos[t])
        groups[key][1].append(float(r[idx["importance"]]))
    return [(k, x, y) for k, (x, y) in groups.items()], labels, numeric


def _label_key(lab: str):
    if lab.isdigit():
        return (0, int(lab), "")
    return (1, 0, lab)
