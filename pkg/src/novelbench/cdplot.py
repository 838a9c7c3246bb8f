"""Critical-difference diagrams as standalone SVG 1.1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .stats import RankTable, cd_groups

WIDTH = 640
MARGIN_X = 150
AXIS_Y = 60
LABEL_STEP = 22
BAR_STEP = 8


@dataclass
class Tick:
    name: str
    rank: float
    side: str  # "left" or "right"
    level: int


@dataclass
class CdLayout:
    axis: tuple[int, int]
    ticks: list[Tick]
    bars: list[tuple[float, float]]
    bar_rows: list[int] = field(default_factory=list)


def cd_layout(avg_ranks: Sequence[float], names: Sequence[str], cd: float) -> CdLayout:
    r = np.asarray(avg_ranks, dtype=float)
    k = len(r)
    if k < 2:
        raise ValueError("a critical-difference diagram needs at least two algorithms")
    lo, hi = math.floor(r.min()), math.ceil(r.max())
    if hi == lo:
        hi = lo + 1
    order = np.argsort(r, kind="stable")
    n_left = (k + 1) // 2
    ticks = []
    for pos, i in enumerate(order):
        if pos < n_left:
            ticks.append(Tick(names[i], float(r[i]), "left", pos))
        else:
            ticks.append(Tick(names[i], float(r[i]), "right", k - 1 - pos))
    index = {n: i for i, n in enumerate(names)}
    bars, rows, row_ends = [], [], []
    for group in cd_groups(r, cd, names):
        a, b = r[index[group[0]]], r[index[group[-1]]]
        row = next((j for j, end in enumerate(row_ends) if end < a), len(row_ends))
        if row == len(row_ends):
            row_ends.append(b)
        else:
            row_ends[row] = b
        bars.append((float(a), float(b)))
        rows.append(row)
    return CdLayout((lo, hi), ticks, bars, rows)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(layout: CdLayout, cd: float | None = None, title: str | None = None,
               metadata: dict | None = None) -> str:
    lo, hi = layout.axis
    span = WIDTH - 2 * MARGIN_X

    def x_of(rank):
        return MARGIN_X + (rank - lo) / (hi - lo) * span

    n_levels = max(t.level for t in layout.ticks) + 1
    bar_rows = max(layout.bar_rows, default=-1) + 1
    label_top = AXIS_Y + 20
    height = label_top + n_levels * LABEL_STEP + bar_rows * BAR_STEP + 30
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    if metadata:
        desc = "; ".join(f"{k}={metadata[k]}" for k in sorted(metadata))
        out.append(f"<desc>{escape(desc)}</desc>")
    out.append(f'<line class="axis" x1="{_fmt(x_of(lo))}" y1="{AXIS_Y}" '
               f'x2="{_fmt(x_of(hi))}" y2="{AXIS_Y}" stroke="black" stroke-width="1"/>')
    for v in range(lo, hi + 1):
        x = _fmt(x_of(v))
        out.append(f'<line class="tick" x1="{x}" y1="{AXIS_Y - 5}" x2="{x}" y2="{AXIS_Y + 5}" '
                   f'stroke="black"/>')
        out.append(f'<text class="tick-label" x="{x}" y="{AXIS_Y - 9}" '
                   f'text-anchor="middle">{v}</text>')
    if cd is not None:
        x0, x1 = x_of(lo), x_of(lo + cd)
        out.append(f'<line class="cd" x1="{_fmt(x0)}" y1="{AXIS_Y - 35}" x2="{_fmt(x1)}" '
                   f'y2="{AXIS_Y - 35}" stroke="black" stroke-width="1"/>')
        out.append(f'<text class="cd-label" x="{_fmt((x0 + x1) / 2)}" y="{AXIS_Y - 40}" '
                   f'text-anchor="middle">CD = {cd:.4f}</text>')
    for t in layout.ticks:
        x = x_of(t.rank)
        y = label_top + bar_rows * BAR_STEP + t.level * LABEL_STEP
        if t.side == "left":
            xe, anchor, tx = MARGIN_X - 10, "end", MARGIN_X - 14
        else:
            xe, anchor, tx = WIDTH - MARGIN_X + 10, "start", WIDTH - MARGIN_X + 14
        out.append(f'<polyline class="leader" points="{_fmt(x)},{AXIS_Y} {_fmt(x)},{y} '
                   f'{xe},{y}" fill="none" stroke="black"/>')
        out.append(f'<text class="label" x="{tx}" y="{y + 4}" text-anchor="{anchor}">'
                   f'{escape(t.name)} ({t.rank:.2f})</text>')
    for (a, b), row in zip(layout.bars, layout.bar_rows):
        y = AXIS_Y + 12 + row * BAR_STEP
        out.append(f'<line class="bar" x1="{_fmt(x_of(a) - 4)}" y1="{y}" x2="{_fmt(x_of(b) + 4)}" '
                   f'y2="{y}" stroke="black" stroke-width="4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_cd_diagram(rt: RankTable, cd: float, path, title: str | None = None,
                      metadata: dict | None = None) -> Path:
    if rt.k < 2:
        raise ValueError("a critical-difference diagram needs at least two algorithms")
    layout = cd_layout(rt.avg, rt.algorithms, cd)
    meta = {"cd": f"{cd:.4f}", "k": rt.k, "N": rt.n, **(metadata or {})}
    svg = render_svg(layout, cd, title, meta)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return path
