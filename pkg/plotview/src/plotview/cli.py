"""Command-line entry point: plotview <csv> <output image> [--columns ...]."""

import argparse
import sys

from .panels import DEFAULT_COLUMNS, PanelSpec, render_panels


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plotview",
        description="Render stacked diagnostics panels from an evcorr CSV",
    )
    parser.add_argument("csv", help="diagnostics CSV path")
    parser.add_argument("output", help="output image path (png/pdf/...)")
    parser.add_argument(
        "--columns",
        default=",".join(DEFAULT_COLUMNS),
        help="comma-separated columns to plot (default %(default)s)",
    )
    parser.add_argument(
        "--no-zero-line",
        action="store_true",
        help="suppress the zero reference line on the MD panel",
    )
    args = parser.parse_args(argv)
    spec = PanelSpec(
        csv_path=args.csv,
        columns=tuple(c.strip() for c in args.columns.split(",") if c.strip()),
        zero_line=not args.no_zero_line,
    )
    try:
        render_panels(spec, args.output)
    except (OSError, ValueError) as exc:
        print(f"plotview: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
