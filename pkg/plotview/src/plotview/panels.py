"""Render stacked time-series panels from an evcorr diagnostics CSV.

The input schema is the flow solver's per-step diagnostics file,
one row per step with the exact header

    t,MD,TMD,EVD,VD,KE,CKE,VD_total,residual

Rendering is read-only and deterministic for a fixed CSV: one image with
one panel per requested column (default MD, TMD, EVD, VD), linear y-scale,
and a zero reference line on the MD panel so sign changes are visible.
Zero crossings of the MD series are marked on that panel.
"""

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DIAGNOSTICS_HEADER = "t,MD,TMD,EVD,VD,KE,CKE,VD_total,residual"
DEFAULT_COLUMNS = ("MD", "TMD", "EVD", "VD")
CROSSING_LABEL = "zero-crossings"


def read_diagnostics(csv_path):
    """Parse a diagnostics CSV into a dict of column arrays.

    The header must match the solver schema exactly; anything else is
    rejected rather than guessed at.
    """
    with open(csv_path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != DIAGNOSTICS_HEADER:
        got = lines[0] if lines else "<empty>"
        raise ValueError(
            f"{csv_path}: header {got!r} does not match the diagnostics "
            f"schema {DIAGNOSTICS_HEADER!r}"
        )
    names = DIAGNOSTICS_HEADER.split(",")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(names):
            raise ValueError(
                f"{csv_path}:{lineno}: expected {len(names)} fields, "
                f"got {len(fields)}"
            )
        try:
            rows.append([float(tok) for tok in fields])
        except ValueError:
            raise ValueError(f"{csv_path}:{lineno}: non-numeric field") from None
    data = np.array(rows) if rows else np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


def zero_crossings(t, values):
    """Interpolated times where the series changes sign (strict crossings)."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    sign_flip = values[:-1] * values[1:] < 0.0
    idx = np.nonzero(sign_flip)[0]
    frac = values[idx] / (values[idx] - values[idx + 1])
    return t[idx] + frac * (t[idx + 1] - t[idx])


@dataclass
class PanelSpec:
    """What to plot: CSV path, columns, zero-line toggle for the MD panel."""

    csv_path: str
    columns: tuple = field(default=DEFAULT_COLUMNS)
    zero_line: bool = True

    def __post_init__(self):
        self.columns = tuple(self.columns)
        if not self.columns:
            raise ValueError("at least one column is required")


def build_figure(spec):
    """Figure with one stacked panel per column; MD crossings marked."""
    data = read_diagnostics(spec.csv_path)
    missing = [c for c in spec.columns if c not in data]
    if missing:
        raise ValueError(
            f"column(s) {', '.join(missing)} not in the diagnostics schema"
        )
    t = data["t"]
    fig, axes = plt.subplots(
        len(spec.columns),
        1,
        sharex=True,
        figsize=(9.0, 2.2 * len(spec.columns)),
        squeeze=False,
    )
    axes = axes[:, 0]
    for ax, column in zip(axes, spec.columns):
        series = data[column]
        ax.plot(t, series, lw=1.0, color="tab:blue", label=column)
        ax.set_ylabel(column)
        ax.margins(x=0.0)
        if column == "MD":
            if spec.zero_line:
                ax.axhline(0.0, color="0.4", lw=0.8, ls="--")
            crossings = zero_crossings(t, series)
            ax.plot(
                crossings,
                np.zeros_like(crossings),
                "o",
                ms=4,
                color="tab:red",
                label=CROSSING_LABEL,
            )
    axes[-1].set_xlabel("t")
    fig.align_ylabels(axes)
    fig.tight_layout()
    return fig


def md_crossings_in_figure(fig):
    """Crossing times marked on the MD panel of a built figure."""
    for ax in fig.axes:
        for line in ax.get_lines():
            if line.get_label() == CROSSING_LABEL:
                return np.asarray(line.get_xdata(), dtype=float)
    return np.empty(0)


def render_panels(spec, out_path):
    """Write the stacked-panel image for the spec; returns the output path."""
    fig = build_figure(spec)
    try:
        fig.savefig(out_path, dpi=120)
    finally:
        plt.close(fig)
    return out_path
