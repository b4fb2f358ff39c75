#!/usr/bin/env python3
"""Moving-average discounted return against training episode, one panel per player.

Reads ``cells/*/episode_returns.csv`` under a results directory and writes
``report/training_curves.svg``.

    python scripts/plot_training_curves.py results/desk --window 50
"""
import argparse
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from transparency_sim.harness.experiment import read_csv  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("results", type=Path)
    ap.add_argument("--window", type=int, default=50)
    args = ap.parse_args()

    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8))
    cells = sorted((args.results / "cells").glob("d*_s*"))
    if not cells:
        raise SystemExit(f"no cells under {args.results}")
    for cell in cells:
        delay, seed = map(int, re.match(r"d(\d+)_s(\d+)", cell.name).groups())
        rows = read_csv(cell / "episode_returns.csv")
        for ax, player in zip(axes, ("mm", "pt")):
            x = np.array([float(r["discounted_return"]) for r in rows if r["player"] == player]) / 100
            if len(x) < args.window:
                continue
            ma = np.convolve(x, np.ones(args.window) / args.window, mode="valid")
            ax.plot(np.arange(args.window, len(x) + 1), ma, lw=1, label=f"delay {delay}, seed {seed}")
    for ax, player in zip(axes, ("MM", "PT")):
        ax.set_title(f"{player} training")
        ax.set_xlabel("episode")
        ax.set_ylabel(f"{args.window}-episode mean discounted return ($)")
    axes[1].legend(fontsize=6, ncol=2)
    out = args.results / "report"
    out.mkdir(exist_ok=True)
    fig.tight_layout()
    fig.savefig(out / "training_curves.svg", metadata={"Date": None})
    print(out / "training_curves.svg")


if __name__ == "__main__":
    main()
