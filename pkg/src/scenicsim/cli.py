"""Command-line front end: run scenarios, validate them, list builtins.

    scenic-sim run fairness --out runs
    scenic-sim run my.scn other.scn --jobs 2 --seed 7
    scenic-sim validate my.scn
    scenic-sim list-builtin

``run`` accepts scenario file paths or builtin names.  The output root
comes from --out, else $SCENIC_SIM_OUT, else ./runs.  Exit status is 0 on
a clean run and nonzero when parsing fails or a simulator invariant fires.
"""

from __future__ import annotations

import argparse
import multiprocessing
import sys
from importlib import resources
from pathlib import Path
from typing import List, Optional

from .core import ConfigError, InvariantViolation, ProtocolError
from .runner import default_out_dir, run_scenario
from .scenario import ScenarioError, parse_scenario

BUILTINS = ("fairness", "dumbbell-dcqcn", "incast-firewall", "hashpart",
            "collective")


def builtin_text(name: str) -> str:
    ref = resources.files("scenicsim.scenarios").joinpath(f"{name}.scn")
    return ref.read_text()


def load_scenario_text(spec: str) -> str:
    path = Path(spec)
    if path.exists():
        return path.read_text()
    if spec in BUILTINS:
        return builtin_text(spec)
    raise ConfigError(f"no such scenario file or builtin: {spec}")


def _run_one(args) -> int:
    spec, out_dir, seed, sample_period = args
    try:
        text = load_scenario_text(spec)
        sc = parse_scenario(text)
        result = run_scenario(sc, out_dir, seed=seed,
                              sample_period_ns=sample_period)
    except ScenarioError as exc:
        for line, msg in exc.errors:
            print(f"{spec}:{line}: {msg}", file=sys.stderr)
        return 2
    except (InvariantViolation, ProtocolError) as exc:
        print(f"{spec}: invariant violated: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"{spec}: {exc}", file=sys.stderr)
        return 2
    print(f"{sc.name}: wrote {result.metrics_path} and {result.counters_path}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="scenic-sim",
        description="deterministic SmartNIC datapath simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one or more scenarios")
    p_run.add_argument("scenarios", nargs="+",
                       help="scenario files or builtin names")
    p_run.add_argument("--out", type=Path, default=None,
                       help="output directory (default: $SCENIC_SIM_OUT or ./runs)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_run.add_argument("--sample-period-ns", type=int, default=None,
                       help="override the metrics sample period")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="run independent scenarios in parallel processes")

    p_val = sub.add_parser("validate", help="parse and check a scenario")
    p_val.add_argument("scenario", help="scenario file or builtin name")
    p_val.add_argument("--print-canonical", action="store_true",
                       help="emit the canonical form on success")

    sub.add_parser("list-builtin", help="list bundled scenarios")

    args = parser.parse_args(argv)

    if args.command == "list-builtin":
        for name in BUILTINS:
            print(name)
        return 0

    if args.command == "validate":
        from .scenario import format_scenario
        try:
            text = load_scenario_text(args.scenario)
            sc = parse_scenario(text)
        except ScenarioError as exc:
            for line, msg in exc.errors:
                print(f"{args.scenario}:{line}: {msg}", file=sys.stderr)
            return 2
        except ConfigError as exc:
            print(f"{args.scenario}: {exc}", file=sys.stderr)
            return 2
        if args.print_canonical:
            sys.stdout.write(format_scenario(sc))
        else:
            print(f"{args.scenario}: ok ({len(sc.nodes)} nodes, "
                  f"{len(sc.flows)} flows, {len(sc.scus)} SCUs)")
        return 0

    out_dir = args.out if args.out is not None else default_out_dir()
    work = [(spec, out_dir, args.seed, args.sample_period_ns)
            for spec in args.scenarios]
    if args.jobs > 1 and len(work) > 1:
        with multiprocessing.Pool(args.jobs) as pool:
            codes = pool.map(_run_one, work)
    else:
        codes = [_run_one(w) for w in work]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
