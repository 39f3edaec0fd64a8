"""Command-line entry point: ``probenav --scenario sim-garden --out runs/garden``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .runner import IoError, run
from .scenario import ParseError, Scenario, ValidationError, builtin_scenarios, parse_scenario, resolve_scenario_path

# Exit codes: 0 only when the goal is reached.
EXIT_CODES = {"goal_reached": 0, "failed": 1, "no_path": 2, "tick_limit": 3}
EXIT_BAD_SCENARIO = 4
EXIT_IO = 5


def apply_overrides(sc: Scenario, args: argparse.Namespace) -> Scenario:
    sim = sc.sim
    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    probing = sim.probing
    if args.probe_all:
        probing = dataclasses.replace(probing, probe_all=True)
    if args.no_probing:
        probing = dataclasses.replace(probing, enabled=False)
    sim = dataclasses.replace(sim, probing=probing)
    changes = {"sim": sim}
    if args.max_ticks is not None:
        changes["max_ticks"] = args.max_ticks
    if args.snapshot_every is not None:
        changes["snapshot_every"] = args.snapshot_every
    return dataclasses.replace(sc, **changes)


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="probenav",
        description="Simulate probing-aware navigation over questionable terrain.",
    )
    p.add_argument("--scenario", help="scenario YAML path or built-in name (see --list)")
    p.add_argument("--out", default="run_out", help="output directory (default: run_out)")
    p.add_argument("--seed", type=_non_negative, help="override the scenario seed")
    p.add_argument("--max-ticks", type=_positive, help="override run.max_ticks")
    p.add_argument("--snapshot-every", type=_non_negative, help="snapshot period in ticks, 0 disables")
    p.add_argument("--probe-all", action="store_true", help="probe every cluster, not only those near the path")
    p.add_argument("--no-probing", action="store_true", help="disable haptic probing")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    p.add_argument("--list", action="store_true", help="list built-in scenarios and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        print("\n".join(builtin_scenarios()))
        return 0
    if not args.scenario:
        print("error: --scenario is required", file=sys.stderr)
        return EXIT_BAD_SCENARIO
    try:
        scenario = apply_overrides(parse_scenario(resolve_scenario_path(args.scenario)), args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_SCENARIO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = run(scenario, args.out, quiet=args.quiet)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(f"artifacts written to {args.out}")
    return EXIT_CODES[report.verdict]


if __name__ == "__main__":
    sys.exit(main())
