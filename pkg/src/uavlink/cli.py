"""Command-line entry point.

    uavlink run <config> [--seed N] [--out DIR] [--duration S]
    uavlink sweep <config> [--seed N] [--out DIR] [--duration S]
    uavlink plotdata <results-dir> --kind fig3|fig4|fig5 [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .harness import PlotDataError, emit_plotdata, run_scenario, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_RUNTIME = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavlink",
        description="Deterministic emulator of a cellular-connected UAV control and video link",
    )
    parser.add_argument("--version", action="version", version=f"uavlink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("run", "run a single scenario"), ("sweep", "run a sweep config")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="scenario file (YAML or JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--duration", type=float, default=None, help="override duration in seconds")

    p = sub.add_parser("plotdata", help="emit plot-ready series from a results directory")
    p.add_argument("results_dir", help="directory containing summary.csv")
    p.add_argument("--kind", required=True, choices=["fig3", "fig4", "fig5"])
    p.add_argument("--out", default=None, help="directory for the .dat file (default: results dir)")
    return parser


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.duration is not None:
        cfg = replace(cfg, duration_s=args.duration)
    if args.out is not None:
        cfg = replace(cfg, outputs=args.out)
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _apply_overrides(load_config(args.config), args)
            result = run_scenario(cfg)
            print(f"wrote {result.out_dir}")
            return EXIT_OK
        if args.command == "sweep":
            cfg = _apply_overrides(load_config(args.config), args)
            result = sweep(cfg)
            print(f"{len(result.results)} runs -> {result.summary_path}")
            return EXIT_OK
        if args.command == "plotdata":
            out = Path(args.out) if args.out else None
            path = emit_plotdata(args.results_dir, args.kind, out_dir=out)
            print(f"wrote {path}")
            return EXIT_OK
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as e:
        print(f"error ({e.category}): {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PlotDataError as e:
        print(f"error (plotdata): {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error (io): {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # pragma: no cover - defensive
        print(f"error (runtime): {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
