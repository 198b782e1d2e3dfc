from __future__ import annotations

import csv
import io
from decimal import ROUND_HALF_UP, Decimal

from ..errors import UsageError
from ..trainer import EvalReport

HEADERS = {
    "pitch_mse": "Pitch MSE",
    "energy_mse": "Energy MSE",
    "duration_mse": "Duration MSE",
    "mcd_db": "MCD (dB)",
    "log_f0_rmse": "Log-F0 RMSE",
}


def format_2dp(x: float | None) -> str:
    """Two decimals, halves rounded away from zero on the printed decimal (0.275 -> 0.28)."""
    if x is None:
        return "-"
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def row_name(r: EvalReport) -> str:
    return f"{r.variant} (+ GT PED)" if r.mode == "GT-PED" else r.variant


def report_table(reports: list[EvalReport], metrics: list[str] | None = None) -> tuple[str, str]:
    """Aligned text table and full-precision CSV, one row per report.

    Columns default to the metrics that at least one report filled in.
    """
    if not reports:
        raise UsageError("report table needs at least one report")
    if metrics is None:
        metrics = [m for m in EvalReport.METRICS if any(getattr(r, m) is not None for r in reports)]
    unknown = [m for m in metrics if m not in HEADERS]
    if unknown:
        raise UsageError(f"unknown metrics {unknown}")
    names = [row_name(r) for r in reports]
    header = ["Model"] + [HEADERS[m] for m in metrics]
    body = [[n] + [format_2dp(getattr(r, m)) for m in metrics] for n, r in zip(names, reports)]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()

    rule = "  ".join("-" * w for w in widths)
    text = "\n".join([line(header), rule] + [line(row) for row in body]) + "\n"

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant"] + metrics)
    for n, r in zip(names, reports):
        w.writerow([n] + ["" if getattr(r, m) is None else repr(float(getattr(r, m))) for m in metrics])
    return text, buf.getvalue()
