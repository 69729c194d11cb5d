"""Command-line interface for the experiment pipeline.

Subcommands mirror the pipeline stages so each can be re-run independently:
gen, simulate, refine, retrieve, evaluate, run-all, sweep-eta.

Exit codes: 0 success, 1 a condition failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import experiment
from .errors import ClickDRError, ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clickdr",
        description="Synthetic click-feedback experiments for dense retrieval.")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--condition", help="run only this condition")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads, 0 = auto (never affects outputs)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "simulate", "refine", "retrieve", "evaluate", "run-all"):
        sub.add_parser(name)
    sweep = sub.add_parser("sweep-eta")
    sweep.add_argument("--etas", default="0.5,1,1.5,2,2.5,3",
                       help="comma-separated position-bias exponents")
    sweep.add_argument("--sweep-out", default=None,
                       help="CSV path (default: <out>/sweep_eta.csv)")
    return parser


def _load_config(args) -> experiment.ExperimentConfig:
    if args.config:
        cfg = experiment.parse_config(args.config)
    else:
        cfg = experiment.ExperimentConfig()
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except (ClickDRError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    only = args.condition
    try:
        if args.command == "run-all":
            failed = experiment.run_experiment(cfg, only=only)
            if failed:
                print(f"failed conditions: {', '.join(failed)}", file=sys.stderr)
                return 1
        elif args.command == "gen":
            experiment.stage_gen(cfg)
        elif args.command == "simulate":
            experiment.stage_simulate(cfg, only=only)
        elif args.command == "refine":
            experiment.stage_refine(cfg, only=only)
        elif args.command == "retrieve":
            experiment.stage_retrieve(cfg, only=only)
        elif args.command == "evaluate":
            experiment.stage_evaluate(cfg, only=only)
        elif args.command == "sweep-eta":
            try:
                etas = [float(e) for e in args.etas.split(",") if e]
            except ValueError as e:
                print(f"config error: bad --etas: {e}", file=sys.stderr)
                return 2
            out_path = args.sweep_out or f"{cfg.output_dir}/sweep_eta.csv"
            experiment.sweep_eta(cfg, etas, out_path=out_path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ClickDRError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
