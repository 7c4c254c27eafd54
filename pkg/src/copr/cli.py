"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 bad usage or configuration,
3 numerical failure inside a solver.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments
from .config import load_config, merge_config
from .errors import (ContainerFormatError, ConvergenceError, NumericalFailure,
                     RankDeficiencyError)
from .experiments import UsageError

_COMMANDS = {
    "simulate": (experiments.SIMULATE_DEFAULTS, experiments.run_simulate),
    "solve": (experiments.SOLVE_DEFAULTS, experiments.run_solve),
    "sparse-demo": (experiments.SPARSE_DEFAULTS, experiments.run_sparse_demo),
    "scaling": (experiments.SCALING_DEFAULTS, experiments.run_scaling),
    "noise-robustness": (experiments.ROBUSTNESS_DEFAULTS,
                         experiments.run_noise_robustness),
    "fixedpoint-diagnostics": (experiments.FIXEDPOINT_DEFAULTS,
                               experiments.run_fixedpoint_diagnostics),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copr",
        description="Phase retrieval via convex lifting: simulation, "
                    "solvers, and reproducible experiment reports.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} command")
        p.add_argument("--config", type=Path, default=None,
                       help="INI file overriding the built-in defaults")
        p.add_argument("--seed", type=int, default=2026,
                       help="master seed (default 2026)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default runs/<command>)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for trial loops (default 1)")
        if name == "solve":
            p.add_argument("measurements", type=Path,
                           help="binary measurement container from simulate")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    defaults, runner = _COMMANDS[args.command]
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        loaded = load_config(args.config) if args.config else {}
        try:
            cfg = merge_config(defaults, loaded)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        out = args.out if args.out else Path("runs") / args.command
        if args.command == "solve":
            summary = runner(cfg, args.seed, out, args.measurements,
                             threads=args.threads)
        else:
            summary = runner(cfg, args.seed, out, threads=args.threads)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError,
            ContainerFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, ConvergenceError, RankDeficiencyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({"command": args.command, "out": str(out),
                      **{k: v for k, v in summary.items() if k != "summary"}},
                     default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
