"""``dgpn`` command-line entry point.

Exit codes: 0 success, 1 config error, 2 runtime failure (including any
aborted seed), 3 failed ``--assert`` expectations.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import DataError
from .harness import TASKS, ConfigError, ExperimentConfig, check_expectations, run, run_znc, write_report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgpn", description="Zero-shot node classification experiments")
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--dataset")
    parser.add_argument("--csd", help="CSD table (JSON)")
    parser.add_argument("--seed", type=int, action="append", help="repeatable; overrides the seed list")
    parser.add_argument("--out", help="report path stem; writes .json, .txt (and .csv for grids)")
    parser.add_argument("--data-root")
    parser.add_argument("--adjacency-as-features", action="store_true", default=None)
    parser.add_argument("--checkpoint-dir", help="znc only: save trained params per seed")
    parser.add_argument("--assert", dest="assert_", action="store_true",
                        help="exit 3 when the config's 'expect' block is not met")
    parser.add_argument("-q", "--quiet", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc["task"] = args.task
    for key in ("dataset", "csd", "out", "data_root", "adjacency_as_features"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if args.seed:
        doc["seeds"] = list(args.seed)
        doc.pop("repeats", None)
    return ExperimentConfig.from_dict(doc)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if config.task == "znc" and args.checkpoint_dir:
            report = run_znc(config, checkpoint_dir=args.checkpoint_dir)
        else:
            report = run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError, ValueError, ArithmeticError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_report(report, config.out)
    if not args.quiet:
        sys.stdout.write(report.to_text())
    if report.aborted:
        return EXIT_RUNTIME
    if args.assert_:
        failures = check_expectations(report, config.expect)
        for f in failures:
            print(f"assertion failed: {f}", file=sys.stderr)
        if failures:
            return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
