"""Command-line entry point: ``cyclic-afp <command> <spec-file> [options]``."""

from __future__ import annotations

import argparse
import sys

from .report import COMMANDS, RunOptions, execute, render_text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cyclic-afp",
        description="Approximate fixed points of cyclical maps on G-metric spaces.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("spec", help="spec file path, or the name of a bundled spec")
    p.add_argument("--epsilon", type=float, help="override the epsilons declared in the spec")
    p.add_argument("--x0", type=float, help="starting point for solve")
    p.add_argument("--k", type=int, help="solve for T^k instead of T")
    p.add_argument("--grid", type=float, help="grid step h")
    p.add_argument("--budget", type=int, help="pair/triple budget for sweeps")
    p.add_argument("--seed", type=int, help="seed for sampled sweeps")
    p.add_argument("--json", metavar="PATH", help="write the JSON report here")
    p.add_argument("--csv", metavar="PATH", help="write the solve trace (or F_eps members) here")
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.k is not None and args.k < 1:
        print("error: --k must be a positive integer", file=sys.stderr)
        return 2
    if args.grid is not None and not args.grid > 0:
        print("error: --grid must be positive", file=sys.stderr)
        return 2
    opts = RunOptions(args.epsilon, args.x0, args.k, args.grid, args.budget, args.seed, args.strict, args.csv)
    report = execute(args.command, args.spec, opts)
    if args.json:
        report.write_json(args.json)
    sys.stdout.write(render_text(report))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
