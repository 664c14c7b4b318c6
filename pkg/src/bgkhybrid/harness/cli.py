"""Command line entry point: ``run``, ``bench`` and ``reference``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .runner import SOLVERS, bench, coerce_config, compute_reference, run
from .scenarios import SCENARIOS, build_scenario


def _add_run_flags(p):
    p.add_argument("--scenario", choices=SCENARIOS, default="accuracy")
    p.add_argument("--solver", choices=SOLVERS, default="fsi")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--cells", type=int)
    p.add_argument("--ppc", type=int)
    p.add_argument("--tfinal", type=float)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--fluid-solver", default="muscl_relaxed")
    p.add_argument("--matching", choices=("on", "off"), default="on")
    p.add_argument("--beta-estimator", choices=("bound", "reconstruction", "zero"), default="bound")
    p.add_argument("--reference", choices=("dvm", "none"), default="dvm")
    p.add_argument("--steps", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgkhybrid", description="Hybrid Monte Carlo / fluid BGK solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="run one configuration"))
    b = sub.add_parser("bench", help="run a sweep of configurations")
    b.add_argument("--sweep", required=True, help="file of 'key = value' lines; commas list sweep values")
    b.add_argument("--out", required=True)
    b.add_argument("--jobs", type=int, default=1)
    r = sub.add_parser("reference", help="compute a discrete-velocity reference profile")
    r.add_argument("--scenario", choices=SCENARIOS, default="accuracy")
    r.add_argument("--epsilon", type=float, default=1e-4)
    r.add_argument("--cells", type=int, default=400)
    r.add_argument("--tfinal", type=float)
    r.add_argument("--n-v", type=int, default=64)
    r.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        raw = {k: v for k, v in vars(args).items() if k != "command"}
        report = run(coerce_config(raw))
        print(json.dumps({"steps": report.steps, "errors": report.errors}, sort_keys=True))
    elif args.command == "bench":
        reports = bench(Path(args.sweep).read_text(), out=args.out, jobs=args.jobs)
        print(f"{len(reports)} runs written under {args.out}")
    else:
        build_scenario(args.scenario)
        x, U = compute_reference(args.scenario, args.epsilon, args.cells, args.tfinal, args.n_v)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        io.write_profile(args.out, x, U, [0.0] * len(x))
    return 0


if __name__ == "__main__":
    sys.exit(main())
