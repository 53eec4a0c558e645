"""Stacked time-series panels for flow-diagnostics CSV files."""

from .panels import (
    DEFAULT_COLUMNS,
    DIAGNOSTICS_HEADER,
    PanelSpec,
    build_figure,
    md_crossings_in_figure,
    read_diagnostics,
    render_panels,
    zero_crossings,
)

__version__ = "0.1.0"
