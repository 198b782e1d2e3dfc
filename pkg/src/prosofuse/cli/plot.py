"""Deterministic SVG 1.1 line charts for per-frame contours, plus a CSV sidecar."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from ..errors import UsageError

PALETTE = ("#222222", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
WIDTH, HEIGHT = 800, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 55


@dataclass
class Series:
    label: str
    values: np.ndarray
    voiced: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.voiced is not None:
            self.voiced = np.asarray(self.voiced, dtype=bool).reshape(-1)
            if len(self.voiced) != len(self.values):
                raise UsageError(f"series {self.label!r}: voiced mask length differs from values")

    def drawn(self) -> np.ndarray:
        ok = np.isfinite(self.values)
        return ok if self.voiced is None else ok & self.voiced


@dataclass
class ContourPlot:
    series: list[Series]
    title: str = ""
    x_label: str = "frame"
    y_label: str = "value"


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10) + 0.0)
        t += step
    return ticks


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick_label(x: float) -> str:
    return f"{x:g}"


def plot_contour(p: ContourPlot) -> tuple[bytes, str]:
    """Return (SVG bytes, CSV text). Frames outside the voiced mask break the line."""
    if not p.series:
        raise UsageError("plot needs at least one series")
    if any(len(s.values) == 0 for s in p.series):
        raise UsageError("plot series must be nonempty")
    drawn = [s.values[s.drawn()] for s in p.series]
    pool = np.concatenate([d for d in drawn if d.size] or [np.zeros(1)])
    n_max = max(len(s.values) for s in p.series)
    y_lo, y_hi = float(pool.min()), float(pool.max())
    pad = 0.05 * (y_hi - y_lo) if y_hi > y_lo else 1.0
    yticks = nice_ticks(y_lo - pad, y_hi + pad)
    y_lo, y_hi = min(yticks[0], y_lo - pad), max(yticks[-1], y_hi + pad)
    xticks = [t for t in nice_ticks(0, max(1, n_max - 1)) if t <= max(1, n_max - 1)]
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(i: float) -> float:
        return LEFT + pw * i / max(1, n_max - 1)

    def sy(v: float) -> float:
        return TOP + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if p.title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="15">{escape(p.title)}</text>')
    out.append('<g class="axes" stroke="#000000" stroke-width="1">')
    out.append(f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/>')
    for t in xticks:
        x = _fmt(sx(t))
        out.append(f'<line x1="{x}" y1="{TOP + ph}" x2="{x}" y2="{TOP + ph + 5}"/>')
        out.append(f'<text x="{x}" y="{TOP + ph + 19}" text-anchor="middle" stroke="none">{_tick_label(t)}</text>')
    for t in yticks:
        y = _fmt(sy(t))
        out.append(f'<line x1="{LEFT - 5}" y1="{y}" x2="{LEFT}" y2="{y}"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y}" text-anchor="end" dominant-baseline="middle" stroke="none">{_tick_label(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle" stroke="none">{escape(p.x_label)}</text>')
    out.append(f'<text transform="translate(18 {TOP + ph / 2:.2f}) rotate(-90)" text-anchor="middle" stroke="none">'
               f'{escape(p.y_label)}</text>')
    out.append("</g>")

    for k, s in enumerate(p.series):
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<g class="series" id="series-{k}" fill="none" stroke="{color}" stroke-width="1.5">')
        out.append(f"<title>{escape(s.label)}</title>")
        ok = s.drawn()
        run: list[str] = []
        for i, v in enumerate(s.values):
            if ok[i]:
                run.append(f"{_fmt(sx(i))},{_fmt(sy(v))}")
            if (not ok[i] or i == len(s.values) - 1) and run:
                if len(run) == 1:
                    cx, cy = run[0].split(",")
                    out.append(f'<circle cx="{cx}" cy="{cy}" r="1.5" fill="{color}" stroke="none"/>')
                else:
                    out.append(f'<polyline points="{" ".join(run)}"/>')
                run = []
        out.append("</g>")

    out.append('<g class="legend">')
    for k, s in enumerate(p.series):
        y = TOP + 10 + 20 * k
        x = LEFT + pw + 15
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 24}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 30}" y="{y}" dominant-baseline="middle">{escape(s.label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    svg = ("\n".join(out) + "\n").encode("utf-8")
    return svg, contour_csv(p)


def contour_csv(p: ContourPlot) -> str:
    """One row per frame; unvoiced or missing cells are empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame"] + [s.label for s in p.series])
    n_max = max(len(s.values) for s in p.series)
    for i in range(n_max):
        row = [str(i)]
        for s in p.series:
            row.append(repr(float(s.values[i])) if i < len(s.values) and s.drawn()[i] else "")
        w.writerow(row)
    return buf.getvalue()


def read_series_csv(text: str) -> list[Series]:
    """Inverse of ``contour_csv``: empty cells are treated as unvoiced."""
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2 or len(rows[0]) < 2:
        raise UsageError("series CSV needs a header with at least one series column and one data row")
    labels = rows[0][1:]
    cols = [[] for _ in labels]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(labels) + 1:
            raise UsageError(f"series CSV line {lineno}: expected {len(labels) + 1} fields")
        for j, cell in enumerate(row[1:]):
            try:
                cols[j].append(float(cell) if cell.strip() else math.nan)
            except ValueError:
                raise UsageError(f"series CSV line {lineno}: bad number {cell!r}") from None
    return [Series(label, np.array(c), np.isfinite(np.array(c))) for label, c in zip(labels, cols)]

