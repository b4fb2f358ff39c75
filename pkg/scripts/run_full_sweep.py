#!/usr/bin/env python3
"""Full-day delay sweep (390 steps, 24 background traders, seven delays).

Thin wrapper around ``transparency-sim sweep`` with the default config. This is
a long run; spread the cells over processes with ``--workers``.

    python scripts/run_full_sweep.py --workers 4 --out results/default
"""
import argparse
from pathlib import Path

from transparency_sim.harness import cli

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(ROOT / "configs" / "default.yaml"))
    ap.add_argument("--out", default="results/default")
    ap.add_argument("--workers", default="1")
    ap.add_argument("--seed-offset", default="0")
    args = ap.parse_args()
    raise SystemExit(cli.main(["sweep", "--config", args.config, "--out", args.out,
                               "--workers", args.workers, "--seed-offset", args.seed_offset]))
