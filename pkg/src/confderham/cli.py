"""Command line runner: ``confderham run <config>``."""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

from .catalog import list_catalog
from .report import emit_report, summary_lines
from .scenarios import ConfigError, parse_config, run_scenario

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="confderham", description="Run conformal de Rham scenarios.")
    ap.add_argument("--list-catalog", action="store_true", help="print the model-space kinds and exit")
    sub = ap.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run the scenarios of a config file")
    run.add_argument("config")
    run.add_argument("--scenario", action="append", help="run only this scenario (repeatable)")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    run.add_argument("--jobs", type=int, default=1, help="run independent scenarios in parallel")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_catalog:
        print("\n".join(list_catalog()))
        return EXIT_OK
    if args.command != "run":
        ap.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        scenarios = parse_config(args.config, args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.scenario:
        known = {s.name for s in scenarios}
        missing = [n for n in args.scenario if n not in known]
        if missing:
            print(f"config error: {args.config}: no scenario named {', '.join(missing)}", file=sys.stderr)
            return EXIT_CONFIG
        scenarios = [s for s in scenarios if s.name in args.scenario]
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_scenario, scenarios))
    else:
        results = [run_scenario(s) for s in scenarios]
    try:
        emit_report(results, args.out)
    except OSError as err:
        print(f"error: cannot write outputs to {args.out}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    for res in results:
        print("\n".join(summary_lines(res)))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS


if __name__ == "__main__":
    sys.exit(main())
