"""Command-line entry point: evcorr <config> [--strict] [--quiet] [--paper-mesh]."""

import argparse
import sys

from .errors import EvcorrError
from .harness import parse_config, run


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="evcorr",
        description="Corrected eddy-viscosity flow runs with energy-budget "
        "diagnostics",
    )
    parser.add_argument("config", help="path to a key = value run configuration")
    parser.add_argument(
        "--strict",
        action="store_true",
        help="exit nonzero on any energy-audit violation",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    parser.add_argument(
        "--paper-mesh",
        action="store_true",
        help="use the finer reference offset-circles mesh",
    )
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    except EvcorrError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 2

    if args.strict:
        cfg.strict = True
    try:
        return run(cfg, paper_mesh=args.paper_mesh, quiet=args.quiet)
    except EvcorrError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
