"""Command-line runner: scenario file in, CSV logs and a summary out."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .harness import EstimatorDiverged, run
from .odometry import OdometryMode
from .simulator import SimulationUnstable


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leggedkf",
        description=(
            "Run a simulated legged-robot scenario through the tightly coupled "
            "estimator and the baseline legged odometry, writing truth.csv, "
            "estimate.csv, baseline.csv and metrics.csv."
        ),
    )
    parser.add_argument("--scenario", required=True, help="path to a run config file")
    parser.add_argument("--mode", choices=["6d", "planar", "none"], help="odometry mode override")
    parser.add_argument("--seed", type=int, help="scenario RNG seed override")
    parser.add_argument("--dt", type=float, help="time step override, seconds")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--threshold", type=float, help="contact detection fraction of weight")
    parser.add_argument(
        "--hide-contact", type=int, action="append", default=None, metavar="ID",
        help="hide this contact entirely from the estimator (repeatable)",
    )
    parser.add_argument("--baseline", choices=["on", "off"], help="run the baseline odometry")
    parser.add_argument(
        "--timing", choices=["on", "off"], default="off",
        help="write wall-clock step times into metrics.csv (off keeps outputs "
        "byte-identical across same-seed runs)",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.scenario)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.dt is not None:
        overrides["dt"] = args.dt
    if overrides:
        config = config.with_overrides(**overrides)

    settings = config.settings
    if args.mode is not None:
        settings = replace(settings, mode=OdometryMode.parse(args.mode))
    if args.threshold is not None:
        settings = replace(settings, threshold_fraction=args.threshold)
    if args.hide_contact is not None:
        settings = replace(settings, hidden_contacts=frozenset(args.hide_contact))
    if args.baseline is not None:
        settings = replace(settings, baseline_on=args.baseline == "on")
    settings = replace(settings, timing_in_csv=args.timing == "on")
    config = replace(config, settings=settings)

    try:
        result = run(config, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimatorDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationUnstable as exc:
        print(f"error: simulation unstable: {exc}", file=sys.stderr)
        return 1

    print(f"scenario: {config.kind}  steps: {result.sim.n_steps}  dt: {result.sim.scenario.dt}")
    print(result.metrics.summary())
    for kind, path in result.paths.items():
        print(f"wrote {kind}: {path}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
