"""Command-line entry point: train, transfer, sweep, and report."""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import AocError
from .harness import run_report, run_sweep, run_train, run_transfer


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoc",
        description="Attention option-critic training on the four-rooms gridworld.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="train all seeds of a config")
    p.add_argument("config", help="path to a YAML run config")
    p.add_argument("--out", help="output run directory")
    p.add_argument("--seeds", help="comma-separated seed override, e.g. 1,2,3")

    p = sub.add_parser("transfer", help="continue a run on a mutated task")
    p.add_argument("config", help="path to a YAML run config with a transfer section")
    p.add_argument("--source", help="run directory holding the source checkpoints")
    p.add_argument("--out", help="output run directory")
    p.add_argument("--seeds", help="comma-separated seed override")

    p = sub.add_parser("sweep", help="grid over attention weights and option counts")
    p.add_argument("config", help="path to a YAML run config with a sweep section")
    p.add_argument("--out", help="output run directory")

    p = sub.add_parser("report", help="aggregate a run directory into plot-ready CSVs")
    p.add_argument("run_dir", help="run directory written by train or transfer")
    p.add_argument("--out", help="report output directory (default: run_dir/report)")
    return parser


def _override_seeds(cfg, seeds_arg):
    if seeds_arg:
        cfg.seeds = [int(s) for s in seeds_arg.split(",") if s]
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.cmd == "train":
            cfg = _override_seeds(load_config(args.config), args.seeds)
            root = run_train(cfg, out_dir=args.out)
        elif args.cmd == "transfer":
            cfg = _override_seeds(load_config(args.config), args.seeds)
            root = run_transfer(cfg, source=args.source, out_dir=args.out)
        elif args.cmd == "sweep":
            cfg = load_config(args.config)
            root = run_sweep(cfg, out_dir=args.out)
        else:
            root = run_report(args.run_dir, out_dir=args.out)
    except AocError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
