"""Minimal SVG line and scatter plots.

Every figure is written next to a CSV holding exactly the plotted series
(``series,x,y``), so numbers can be checked without parsing the SVG.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]
W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 55


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:g}"


def write_plot(path, series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "", ylabel: str = "", logx: bool = False, logy: bool = False,
               markers: bool = False) -> tuple[Path, Path]:
    """Write ``path`` (SVG) and its sibling ``.csv``; returns both paths.

    Points that are non-finite, or non-positive on a log axis, are kept in
    the CSV but skipped in the drawing.
    """
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "x", "y"])
        for name, (xs, ys) in series.items():
            for x, y in zip(xs, ys):
                w.writerow([name, repr(float(x)), repr(float(y))])

    def tx(v, log):
        if not math.isfinite(v) or (log and v <= 0):
            return None
        return math.log10(v) if log else v

    pts = {}
    for name, (xs, ys) in series.items():
        pts[name] = [(a, b) for a, b in ((tx(float(x), logx), tx(float(y), logy)) for x, y in zip(xs, ys))
                     if a is not None and b is not None]
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           'font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{TOP + ph}" x2="{sx(t):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{TOP + ph + 18}" text-anchor="middle">{escape(_fmt(t, logx))}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{LEFT - 5}" y1="{sy(t):.2f}" x2="{LEFT}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{escape(_fmt(t, logy))}</text>')
    out.append(f'<text x="{W / 2 - RIGHT / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (name, ps) in enumerate(pts.items()):
        color = PALETTE[i % len(PALETTE)]
        if ps and not markers:
            d = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in ps)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if markers:
            out.extend(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="{color}"/>' for a, b in ps)
        ly = TOP + 10 + 18 * i
        out.append(f'<rect x="{W - RIGHT + 12}" y="{ly - 8}" width="12" height="4" fill="{color}"/>')
        out.append(f'<text x="{W - RIGHT + 30}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path, csv_path
