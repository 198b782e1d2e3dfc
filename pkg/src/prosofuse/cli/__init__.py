"""Command-line interface, SVG contour plots and metric tables."""

from .app import build_parser, load_config, main, resolve_seed, run
from .plot import ContourPlot, Series, contour_csv, nice_ticks, plot_contour, read_series_csv
from .report import HEADERS, format_2dp, report_table, row_name

__all__ = [
    "ContourPlot",
    "HEADERS",
    "Series",
    "build_parser",
    "contour_csv",
    "format_2dp",
    "load_config",
    "main",
    "nice_ticks",
    "plot_contour",
    "read_series_csv",
    "report_table",
    "resolve_seed",
    "row_name",
    "run",
]
