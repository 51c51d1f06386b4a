"""Command-line front end.

Subcommands: ground, branch-x, branch-y, probe, be-probe, surface.
Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 coupled-norm dichotomy violation.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import DichotomyViolation
from .cli_io import ConfigError, RunConfig, parse_config, run
from .functionals import SolverError

_SUBCOMMAND_BRANCH = {
    "ground": "ground_only",
    "branch-x": "X",
    "branch-y": "Y",
    "probe": "probe",
    "be-probe": "be_probe",
    "surface": "surface",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threewave",
        description="Ground states and weak-coupling vector-solution branches "
                    "of the three-wave interaction system")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, branch in _SUBCOMMAND_BRANCH.items():
        p = sub.add_parser(name, help=f"run the {branch} pipeline")
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--tol", type=float, default=None,
                       help="solver tolerance (overrides config)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent ground states")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
        config.branch = _SUBCOMMAND_BRANCH[args.command]
        if args.out is not None:
            config.output_dir = args.out
        if args.tol is not None:
            if args.tol <= 0:
                raise ConfigError("invalid configuration:\n  --tol: must be positive")
            config.solver["tol"] = args.tol
        # re-validate with the effective branch (subcommand may change
        # which species need (f3) and which coupling list is required)
        from .cli_io import render
        config = parse_config(render(config))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        bundle = run(config, threads=max(1, args.threads))
    except DichotomyViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if bundle.results.get("status") != "ok":
        print(f"error: {bundle.results.get('error', 'solver failure')}", file=sys.stderr)
        return 3
    print(f"ok: results written to {config.output_dir}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
