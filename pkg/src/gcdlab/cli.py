"""Command-line front end: run, report, validate, gen-data."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, parse_config, serialize_config
from .harness import build_dataset, run_experiment
from .report import emit_report
from .synthdata import save_csv_dataset


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcdlab",
        description="Desk-scale category-discovery experiments: train, sweep, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment grid described by a config")
    p_run.add_argument("config", help="YAML experiment config")

    p_report = sub.add_parser("report", help="render charts and a comparison table")
    p_report.add_argument("run_dirs", nargs="+", help="run directories with metrics CSVs")
    p_report.add_argument("-o", "--out", required=True, help="output directory")

    p_val = sub.add_parser("validate", help="check a config and echo its canonical form")
    p_val.add_argument("config", help="YAML experiment config")

    p_gen = sub.add_parser("gen-data", help="write the config's dataset as an embedding CSV")
    p_gen.add_argument("config", help="YAML experiment config")
    p_gen.add_argument("-o", "--out", required=True, help="output CSV path")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(parse_config(args.config))
        if args.command == "report":
            return emit_report(args.run_dirs, args.out)
        if args.command == "validate":
            cfg = parse_config(args.config)
            sys.stdout.write(serialize_config(cfg))
            return 0
        if args.command == "gen-data":
            cfg = parse_config(args.config)
            save_csv_dataset(build_dataset(cfg), args.out)
            return 0
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
