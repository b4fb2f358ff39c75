#!/usr/bin/env python3
"""Desk-scale training smoke run and directional trend check.

Trains both players for every (delay, seed) cell of the desk config, evaluates
them greedily, writes the usual CSVs and report, then prints whether the late
training returns beat the early ones and how profits move with the delay.

    python scripts/run_desk_smoke.py --out results/desk
"""
import argparse
import logging
import time
from pathlib import Path

import numpy as np

from transparency_sim.harness.config import load_config
from transparency_sim.harness.experiment import cell_dir, read_csv, run_eval, run_train
from transparency_sim.harness.report import run_report

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "desk.yaml")
    ap.add_argument("--out", type=Path, default=Path("results/desk"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--window", type=int, default=50, help="episodes in the early/late averages")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = load_config(args.config)
    t0 = time.perf_counter()
    failures = run_train(cfg, args.out, args.workers)
    print(f"training: {time.perf_counter() - t0:.0f}s, failures: {len(failures)}")
    failures += run_eval(cfg, args.out, args.workers)
    manifest = run_report(args.out)

    print(f"\n{'delay':>5} {'seed':>4} {'player':>6} {'early':>9} {'late':>9}  improved")
    for delay in cfg.delay_grid:
        for seed in cfg.seeds:
            path = cell_dir(args.out, delay, seed) / "episode_returns.csv"
            if not path.exists():
                continue
            rows = read_csv(path)
            for player in ("mm", "pt"):
                x = np.array([float(r["discounted_return"]) for r in rows if r["player"] == player])
                early, late = x[:args.window].mean(), x[-args.window:].mean()
                print(f"{delay:>5} {seed:>4} {player:>6} {early:>9.1f} {late:>9.1f}  {late > early}")

    trend = manifest["trend"]
    print(f"\ntrend {min(cfg.delay_grid)} -> {max(cfg.delay_grid)}: MM gains in {trend['mm_positive']}/"
          f"{trend['seeds']} seeds, PT loses in {trend['pt_negative']}/{trend['seeds']} seeds")
    print(f"report: {args.out / 'report'}")
    return 2 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
