"""Summaries and static plots regenerated from the evaluation CSVs."""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..env import MM, PLAYERS, PT  # noqa: E402
from .experiment import ci95, read_csv, write_csv  # noqa: E402

log = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "transparency-sim"
plt.rcParams["svg.fonttype"] = "none"


def _f(x):
    return float(x) if x not in ("", None) else float("nan")


def summarize(out) -> Dict[str, List[dict]]:
    out = Path(out)
    episodes = read_csv(out / "episodes.csv") if (out / "episodes.csv").exists() else []
    welfare = read_csv(out / "welfare.csv") if (out / "welfare.csv").exists() else []

    by_cell = defaultdict(list)
    for r in episodes:
        by_cell[(int(r["delay"]), r["player"])].append(r)
    s_out, s_strat = [], []
    for (delay, player), rows in sorted(by_cell.items(), key=lambda kv: (kv[0][0], PLAYERS.index(kv[0][1]))):
        y = [_f(r["outcome"]) for r in rows]
        s_out.append({"delay": delay, "player": player, "episodes": len(y),
                      "mean_outcome": float(np.mean(y)), "ci95_halfwidth": ci95(y)})
        hold = [_f(r["pct_hold"]) for r in rows]
        s_strat.append({"delay": delay, "player": player,
                        "mean_halfspread": float(np.mean([_f(r["mean_halfspread"]) for r in rows])),
                        "pct_hold": float(np.mean(hold)) if player == PT else None})

    w_cell = defaultdict(list)
    for r in welfare:
        w_cell[int(r["delay"])].append(r)
    s_welf = []
    for delay in sorted(w_cell):
        rows = w_cell[delay]
        ge = [_f(r["swf_ge"]) for r in rows]
        tl = [_f(r["swf_theil"]) for r in rows]
        s_welf.append({"delay": delay, "seeds": len(rows), "swf_ge": float(np.mean(ge)), "swf_ge_ci95": ci95(ge),
                       "swf_theil": float(np.mean(tl)), "swf_theil_ci95": ci95(tl)})
    return {"summary_outcomes": s_out, "summary_strategies": s_strat, "summary_welfare": s_welf,
            "trend": trend_rows(episodes)}


def trend_rows(episodes: List[dict]) -> List[dict]:
    """Per seed: change in mean outcome from the smallest to the largest delay."""
    if not episodes:
        return []
    delays = sorted({int(r["delay"]) for r in episodes})
    lo, hi = delays[0], delays[-1]
    means = defaultdict(list)
    for r in episodes:
        means[(int(r["seed"]), int(r["delay"]), r["player"])].append(_f(r["outcome"]))
    rows = []
    for seed in sorted({int(r["seed"]) for r in episodes}):
        keys = [(seed, d, p) for d in (lo, hi) for p in (MM, PT)]
        if not all(means.get(k) for k in keys):
            continue
        mm = np.mean(means[(seed, hi, MM)]) - np.mean(means[(seed, lo, MM)])
        pt = np.mean(means[(seed, hi, PT)]) - np.mean(means[(seed, lo, PT)])
        rows.append({"seed": seed, "delay_low": lo, "delay_high": hi, "mm_change": float(mm),
                     "pt_change": float(pt), "mm_positive": bool(mm > 0), "pt_negative": bool(pt < 0)})
    return rows


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_outcomes(rows, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, player in zip(axes, PLAYERS):
        pr = [r for r in rows if r["player"] == player]
        x = np.array([r["delay"] for r in pr])
        m = np.array([r["mean_outcome"] for r in pr]) / 100
        c = np.array([r["ci95_halfwidth"] for r in pr]) / 100
        ax.plot(x, m, "o-")
        ax.fill_between(x, m - c, m + c, alpha=0.3)
        ax.set_title(f"{player.upper()} outcome")
        ax.set_xlabel("delay (steps)")
        ax.set_ylabel("profit ($)")
    _save(fig, path)


def _plot_halfspread(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for player in PLAYERS:
        pr = [r for r in rows if r["player"] == player]
        ax.plot([r["delay"] for r in pr], [r["mean_halfspread"] for r in pr], "o-", label=player.upper())
    ax.set_xlabel("delay (steps)")
    ax.set_ylabel("mean half-spread (cents)")
    ax.legend()
    _save(fig, path)


def _plot_hold(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    pr = [r for r in rows if r["player"] == PT]
    ax.plot([r["delay"] for r in pr], [r["pct_hold"] for r in pr], "o-")
    ax.set_xlabel("delay (steps)")
    ax.set_ylabel("PT hold decisions (%)")
    _save(fig, path)


def _plot_welfare(rows, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    x = np.array([r["delay"] for r in rows])
    for ax, key, title in zip(axes, ("swf_ge", "swf_theil"), ("GE(6)-weighted SWF", "Theil-L-weighted SWF")):
        m = np.array([r[key] for r in rows])
        c = np.array([r[f"{key}_ci95"] for r in rows])
        ax.plot(x, m, "o-")
        ax.fill_between(x, m - c, m + c, alpha=0.3)
        ax.set_title(title)
        ax.set_xlabel("delay (steps)")
        ax.set_ylabel("welfare ($)")
    _save(fig, path)


def _plot_importance(rows, path, title):
    groups = sorted({r["group"] for r in rows})
    scores = {g: np.mean([_f(r["score"]) for r in rows if r["group"] == g]) for g in groups}
    order = sorted(groups, key=lambda g: scores[g])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    colors = ["olive" if any(r["delayed"] == "1" for r in rows if r["group"] == g) else "tab:blue" for g in order]
    ax.barh(order, [scores[g] for g in order], color=colors)
    ax.set_xlabel("mean action change when permuted")
    ax.set_title(title)
    _save(fig, path)


def run_report(out) -> dict:
    """Write summary CSVs, SVG plots and ``report/manifest.json``."""
    out = Path(out)
    rep = out / "report"
    rep.mkdir(parents=True, exist_ok=True)
    warnings = []
    for name in ("episodes.csv", "welfare.csv", "importance.csv"):
        if not (out / name).exists():
            warnings.append(f"missing {name}")
    failures_path = out / "failures.csv"
    if failures_path.exists():
        for f in read_csv(failures_path):
            warnings.append(f"cell delay={f['delay']} seed={f['seed']} failed in {f['stage']}: {f['error']}")

    tables = summarize(out)
    files = []
    for name, rows in tables.items():
        write_csv(rep / f"{name}.csv", name, rows)
        files.append(f"{name}.csv")

    if tables["summary_outcomes"]:
        _plot_outcomes(tables["summary_outcomes"], rep / "outcomes.svg")
        _plot_halfspread(tables["summary_strategies"], rep / "halfspread.svg")
        _plot_hold(tables["summary_strategies"], rep / "pct_hold.svg")
        files += ["outcomes.svg", "halfspread.svg", "pct_hold.svg"]
    if tables["summary_welfare"]:
        _plot_welfare(tables["summary_welfare"], rep / "welfare.svg")
        files.append("welfare.svg")
    if (out / "importance.csv").exists():
        imp = read_csv(out / "importance.csv")
        keys = sorted({(int(r["delay"]), r["player"], r["head"]) for r in imp})
        for delay, player, head in keys:
            rows = [r for r in imp if (int(r["delay"]), r["player"], r["head"]) == (delay, player, head)]
            name = f"importance_{player}_{head}_d{delay}.svg"
            _plot_importance(rows, rep / name, f"{player.upper()} {head}, delay {delay}")
            files.append(name)

    trend = tables["trend"]
    manifest = {
        "files": files,
        "warnings": warnings,
        "trend": {
            "seeds": len(trend),
            "mm_positive": sum(r["mm_positive"] for r in trend),
            "pt_negative": sum(r["pt_negative"] for r in trend),
        },
    }
    with open(rep / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for w in warnings:
        log.warning(w)
    return manifest
