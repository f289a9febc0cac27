"""Command line entry point.

Exit status: 0 all thresholds met, 1 a threshold failed, 2 bad usage or
configuration, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import runner
from .io import ConfigError, RunConfig, format_value, load_config

EXIT_OK, EXIT_THRESHOLD, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="kpmsym", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "simulate a scenario and write snapshots"),
                        ("verify-conservation", "check the discrete and continuous conservation laws"),
                        ("verify-equivalence", "compare the 45-point and box schemes"),
                        ("convergence", "refinement study against the exact solution")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key=value config file (defaults if omitted)")
        sp.add_argument("--out", help="output directory (overrides out_dir)")
        if name == "convergence":
            sp.add_argument("--levels", type=int, default=3)
    return p


def _summary(outcome: runner.Outcome):
    keys = [k for k in outcome.entries if k.startswith(("final.", "discrete.max", "continuous.orders",
                                                         "equivalence.max", "orders.", "verdict.time_factor",
                                                         "verdict.lump_denominator_power", "two_soliton.",
                                                         "mass.relative"))
            and ".orders." not in k]
    for k in keys:
        print(f"{k}={format_value(outcome.entries[k])}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.command == "run":
            outcome = runner.run(cfg, args.out)
        elif args.command == "verify-conservation":
            outcome = runner.verify_conservation(cfg, args.out)
        elif args.command == "verify-equivalence":
            outcome = runner.verify_equivalence(cfg, args.out)
        else:
            outcome = runner.convergence_study(cfg, args.levels, args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except runner.SolverFailure as exc:
        print(f"error: {exc} (residual {exc.residual:.3e})", file=sys.stderr)
        return EXIT_SOLVER
    _summary(outcome)
    print("PASS" if outcome.ok else "FAIL")
    return EXIT_OK if outcome.ok else EXIT_THRESHOLD


if __name__ == "__main__":
    sys.exit(main())
