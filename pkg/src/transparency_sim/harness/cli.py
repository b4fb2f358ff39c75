"""Command line entry point: ``transparency-sim {train,eval,report,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 at least one sweep cell failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .experiment import run_eval, run_train
from .report import run_report

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transparency-sim",
                                     description="Delay-in-observability market experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("train", "train both players for every (delay, seed) cell"),
                            ("eval", "evaluate trained checkpoints greedily"),
                            ("report", "summaries and plots from evaluation CSVs"),
                            ("sweep", "train, eval and report in one go")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="flat-key YAML config file")
        p.add_argument("--out", type=Path, help="output directory (overrides experiment.output_dir)")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    failures = []
    if args.command in ("train", "sweep"):
        dump_config(cfg, out / "config.resolved.yaml")
        failures += run_train(cfg, out, args.workers, args.seed_offset)
    if args.command in ("eval", "sweep"):
        failures += run_eval(cfg, out, args.workers, args.seed_offset)
    if args.command in ("report", "sweep"):
        manifest = run_report(out)
        if args.command == "report" and manifest["warnings"]:
            return EXIT_PARTIAL
    return EXIT_PARTIAL if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
