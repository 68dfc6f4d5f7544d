"""Command-line entry point.

Subcommands::

    marlscale train   --config run.json   --out runs/a
    marlscale sweep   --config sweep.yaml --out runs/sweep
    marlscale report  runs/a/report.json [...] [--csv table.csv] [--figure breakdown.png]
    marlscale compare --growth runs/sweep/growth.json

Log verbosity comes from ``MARLSCALE_LOG`` (DEBUG, INFO, WARNING; default WARNING).
Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from . import harness
from .config import ConfigError, RunConfig, SweepConfig, load_config

LOG_ENV = "MARLSCALE_LOG"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marlscale", description="Profiled multi-agent actor-critic training.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training job and write its report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="train across a doubling ladder of agent counts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="print phase breakdowns of report files")
    p.add_argument("files", nargs="+")
    p.add_argument("--csv", default=None, help="write tidy per-phase rows here")
    p.add_argument("--figure", default=None, help="write a breakdown figure here")

    p = sub.add_parser("compare", help="check a growth table against reference trends")
    p.add_argument("--growth", required=True)
    return parser


def _configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _load(path: str):
    try:
        return load_config(path)
    except OSError as exc:
        raise ConfigError(f"<root>: cannot read {path}: {exc.strerror}") from None


def main(argv: Optional[List[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.command in ("train", "sweep"):
        try:
            cfg = _load(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return harness.EXIT_VALIDATION
        if args.command == "train":
            if isinstance(cfg, SweepConfig):
                print("error: sweep: section not allowed for train", file=sys.stderr)
                return harness.EXIT_VALIDATION
            return harness.cmd_train(cfg, args.out)
        if isinstance(cfg, RunConfig):
            cfg = SweepConfig(base=cfg)
        return harness.cmd_sweep(cfg, args.out)
    if args.command == "report":
        return harness.cmd_report(args.files, args.csv, args.figure)
    return harness.cmd_compare(args.growth)


if __name__ == "__main__":
    sys.exit(main())
