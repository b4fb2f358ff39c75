"""Sweep cells (delay, seed): training, greedy evaluation and CSV aggregation.

Output layout under ``out``::

    cells/d{delay}_s{seed}/checkpoint_{mm,pt}.npz
    cells/d{delay}_s{seed}/training_curves.csv
    cells/d{delay}_s{seed}/episode_returns.csv
    training_curves.csv  outcomes.csv  strategies.csv  welfare.csv
    importance.csv  episodes.csv  failures.csv
"""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..env import DELAYED_GROUPS, HOLD, MM, PLAYERS, PT, make_env_factory
from ..learner import Learner, LearnerConfig, evaluate, train
from ..learner.ppo import TrainingDiverged
from ..welfare import sanitized_swf
from .config import ExperimentConfig
from .importance import permutation_importance

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
SCHEMA_VERSION = 1
CENTS_PER_DOLLAR = 100.0
HEAD_NAMES = {MM: ("halfspread",), PT: ("halfspread", "side")}

SCHEMAS = {
    "training_curves": ["delay", "seed", "iteration", "player", "episodes", "mean_discounted_return",
                        "moving_avg_return", "entropy", "policy_loss", "value_loss", "loss",
                        "approx_kl", "clip_fraction", "grad_norm"],
    "episode_returns": ["episode", "player", "discounted_return"],
    "episodes": ["delay", "seed", "episode", "player", "outcome", "mean_halfspread", "pct_hold",
                 "filled_volume"],
    "outcomes": ["delay", "seed", "player", "episodes", "mean_outcome", "ci95_halfwidth"],
    "strategies": ["delay", "seed", "player", "mean_halfspread", "pct_hold"],
    "welfare": ["delay", "seed", "episodes", "mean", "ge_index", "theil_l", "swf_ge", "swf_theil",
                "applied_shift", "swf_ge_ci95", "swf_theil_ci95"],
    "importance": ["delay", "seed", "player", "head", "rank", "group", "delayed", "score"],
    "failures": ["delay", "seed", "stage", "error"],
    "summary_outcomes": ["delay", "player", "episodes", "mean_outcome", "ci95_halfwidth"],
    "summary_strategies": ["delay", "player", "mean_halfspread", "pct_hold"],
    "summary_welfare": ["delay", "seeds", "swf_ge", "swf_ge_ci95", "swf_theil", "swf_theil_ci95"],
    "trend": ["seed", "delay_low", "delay_high", "mm_change", "pt_change", "mm_positive", "pt_negative"],
}


# -- csv helpers ---------------------------------------------------------
def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def write_csv(path, schema: str, rows: Iterable[dict]) -> None:
    cols = SCHEMAS[schema]
    with open(path, "w", newline="") as fh:
        fh.write(f"# {schema} schema v{SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in cols])


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cell_dir(out, delay: int, seed: int) -> Path:
    return Path(out) / "cells" / f"d{delay}_s{seed}"


def ci95(x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return 0.0
    return float(1.96 * x.std(ddof=1) / np.sqrt(len(x)))


# -- checkpoints ---------------------------------------------------------
def save_checkpoint(path, learner: Learner, player: str) -> None:
    """Store weights and normalizer state in an ``.npz`` archive.

    Keys: ``format_version``, ``player``, ``head_sizes``, ``hidden``,
    ``obs_clip``, ``actor_{i}``/``critic_{i}`` (alternating W, b), and
    ``obs_{mean,var,count}`` / ``ret_{mean,var,count}``.
    """
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "player": np.array(player),
        "head_sizes": np.array(learner.params.head_sizes),
        "hidden": np.array(learner.config.hidden),
        "obs_clip": np.array(learner.config.obs_clip),
    }
    for i, a in enumerate(learner.params.actor):
        arrays[f"actor_{i}"] = a
    for i, c in enumerate(learner.params.critic):
        arrays[f"critic_{i}"] = c
    for prefix, stats in (("obs", learner.obs_norm.stats), ("ret", learner.reward_scaler.stats)):
        for k, v in stats.state().items():
            arrays[f"{prefix}_{k}"] = v
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Learner:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        head_sizes = tuple(int(h) for h in data["head_sizes"])
        hidden = tuple(int(h) for h in data["hidden"])
        n_layers = len(hidden) + 1
        actor = [data[f"actor_{i}"] for i in range(2 * n_layers)]
        critic = [data[f"critic_{i}"] for i in range(2 * n_layers)]
        cfg = LearnerConfig(hidden=hidden, obs_clip=float(data["obs_clip"]))
        learner = Learner(actor[0].shape[0], head_sizes, cfg, np.random.default_rng(0))
        learner.params.actor = [a.copy() for a in actor]
        learner.params.critic = [c.copy() for c in critic]
        learner.obs_norm.stats.load({k: data[f"obs_{k}"] for k in ("mean", "var", "count")})
        learner.reward_scaler.stats.load({k: data[f"ret_{k}"] for k in ("mean", "var", "count")})
    return learner


# -- cells -----------------------------------------------------------------
def train_cell(cfg: ExperimentConfig, delay: int, seed: int, out) -> dict:
    d = cell_dir(out, delay, seed)
    d.mkdir(parents=True, exist_ok=True)
    try:
        result = train(make_env_factory(cfg.env_for(delay)), cfg.learner_configs(), seed)
    except TrainingDiverged as exc:
        return {"delay": delay, "seed": seed, "stage": "train", "error": str(exc)}
    for p, learner in result.learners.items():
        save_checkpoint(d / f"checkpoint_{p}.npz", learner, p)
    write_csv(d / "training_curves.csv", "training_curves",
              ({"delay": delay, "seed": seed, **row} for row in result.curves.rows))
    write_csv(d / "episode_returns.csv", "episode_returns",
              ({"episode": i, "player": p, "discounted_return": r}
               for p in PLAYERS for i, r in enumerate(result.curves.episode_returns[p])))
    return {}


def eval_seed(seed: int) -> int:
    # evaluation episodes are shared across delays for a given seed
    return int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])


def eval_cell(cfg: ExperimentConfig, delay: int, seed: int, out, policies: Optional[dict] = None) -> dict:
    """Greedy evaluation of one cell; returns its rows for every output table."""
    d = cell_dir(out, delay, seed)
    if policies is None:
        policies = {}
        for p in PLAYERS:
            path = d / f"checkpoint_{p}.npz"
            if not path.exists():
                return {"failure": {"delay": delay, "seed": seed, "stage": "eval",
                                    "error": f"missing checkpoint {path}"}}
            policies[p] = load_checkpoint(path)
    env_cfg = cfg.env_for(delay)
    factory = make_env_factory(env_cfg, log=cfg.episode_logs)
    res = evaluate(policies, factory, cfg.eval_episodes, eval_seed(seed))
    levels = np.asarray(env_cfg.mm_halfspread_levels)
    hold_idx = env_cfg.pt_sides.index(HOLD)

    episodes, outcomes, strategies = [], [], []
    for p in PLAYERS:
        ep_half, ep_hold = [], []
        for e, acts in enumerate(res.actions[p]):
            half = float(levels[acts[:, 0]].mean())
            hold = float(100.0 * np.mean(acts[:, 1] == hold_idx)) if p == PT else None
            ep_half.append(half)
            ep_hold.append(hold)
            episodes.append({"delay": delay, "seed": seed, "episode": e, "player": p,
                             "outcome": float(res.outcomes[p][e]), "mean_halfspread": half,
                             "pct_hold": hold, "filled_volume": int(res.fills[p][e])})
        outcomes.append({"delay": delay, "seed": seed, "player": p, "episodes": len(res.outcomes[p]),
                         "mean_outcome": float(np.mean(res.outcomes[p])),
                         "ci95_halfwidth": ci95(res.outcomes[p])})
        strategies.append({"delay": delay, "seed": seed, "player": p,
                           "mean_halfspread": float(np.mean(ep_half)),
                           "pct_hold": float(np.mean(ep_hold)) if p == PT else None})

    welfare = welfare_row(delay, seed, res.outcomes[MM], res.outcomes[PT], cfg)

    importance = []
    env = factory()
    for p in PLAYERS:
        if not hasattr(policies[p], "params"):
            continue
        obs = res.observations[p]
        if len(obs) > cfg.importance_max_rows:
            keep = np.random.default_rng([seed, delay]).choice(len(obs), cfg.importance_max_rows, replace=False)
            obs = obs[np.sort(keep)]
        if len(obs) < 1000:
            log.warning("importance for %s at delay %d uses only %d observations", p, delay, len(obs))
        for h, head in enumerate(HEAD_NAMES[p]):
            scores = permutation_importance(policies[p].params, obs, h, env.feature_groups,
                                            rng=seed, repeats=cfg.importance_repeats,
                                            delayed_groups=DELAYED_GROUPS)
            for rank, s in enumerate(scores):
                importance.append({"delay": delay, "seed": seed, "player": p, "head": head, "rank": rank,
                                   "group": s.group, "delayed": s.delayed, "score": s.score})
    return {"episodes": episodes, "outcomes": outcomes, "strategies": strategies,
            "welfare": [welfare], "importance": importance}


def welfare_row(delay: int, seed: int, mm_outcomes, pt_outcomes, cfg: ExperimentConfig) -> dict:
    """Welfare for one cell from per-episode profits in cents.

    ``per_episode``: sanitize and score each episode's [MM, PT] profits in
    dollars, then average. ``mean_outcomes``: score the mean profits once.
    """
    mm = np.asarray(mm_outcomes, dtype=float) / CENTS_PER_DOLLAR
    pt = np.asarray(pt_outcomes, dtype=float) / CENTS_PER_DOLLAR
    unit = 1.0 / CENTS_PER_DOLLAR
    if cfg.swf_mode == "per_episode":
        reports = [sanitized_swf([a, b], cfg.kappa, cfg.eps_fraction, unit) for a, b in zip(mm, pt)]
    else:
        reports = [sanitized_swf([mm.mean(), pt.mean()], cfg.kappa, cfg.eps_fraction, unit)]
    get = lambda k: [getattr(r, k) for r in reports]
    return {"delay": delay, "seed": seed, "episodes": len(mm),
            "mean": float(np.mean(get("mean"))), "ge_index": float(np.mean(get("ge_index"))),
            "theil_l": float(np.mean(get("theil_l"))), "swf_ge": float(np.mean(get("swf_ge"))),
            "swf_theil": float(np.mean(get("swf_theil"))),
            "applied_shift": float(np.mean(get("applied_shift"))),
            "swf_ge_ci95": ci95(get("swf_ge")), "swf_theil_ci95": ci95(get("swf_theil"))}


# -- sweeps ----------------------------------------------------------------
def _cells(cfg: ExperimentConfig, seed_offset: int) -> List[Tuple[int, int]]:
    return [(d, s + seed_offset) for d in cfg.delay_grid for s in cfg.seeds]


def _run_cells(fn: Callable, cfg, cells, out, workers: int) -> List:
    if workers <= 1:
        return [fn(cfg, d, s, out) for d, s in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, cfg, d, s, out) for d, s in cells]
        return [f.result() for f in futures]


def run_train(cfg: ExperimentConfig, out, workers: int = 1, seed_offset: int = 0) -> List[dict]:
    """Train every (delay, seed) cell. Returns failure rows (empty on success)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cells = _cells(cfg, seed_offset)
    results = _run_cells(train_cell, cfg, cells, out, workers)
    failures = [r for r in results if r]
    rows = []
    for d, s in cells:
        path = cell_dir(out, d, s) / "training_curves.csv"
        if path.exists():
            rows.extend(read_csv(path))
    write_csv(out / "training_curves.csv", "training_curves", rows)
    _record_failures(out, failures, "train")
    return failures


def run_eval(cfg: ExperimentConfig, out, workers: int = 1, seed_offset: int = 0) -> List[dict]:
    out = Path(out)
    cells = _cells(cfg, seed_offset)
    results = _run_cells(eval_cell, cfg, cells, out, workers)
    tables: Dict[str, List[dict]] = {k: [] for k in ("episodes", "outcomes", "strategies", "welfare", "importance")}
    failures = []
    for res in results:
        if "failure" in res:
            failures.append(res["failure"])
            continue
        for k in tables:
            tables[k].extend(res[k])
    for k, rows in tables.items():
        write_csv(out / f"{k}.csv", k, rows)
    _record_failures(out, failures, "eval")
    return failures


def _record_failures(out: Path, failures: List[dict], stage: str) -> None:
    path = out / "failures.csv"
    previous = [r for r in read_csv(path) if r["stage"] != stage] if path.exists() else []
    write_csv(path, "failures", previous + failures)
    for f in failures:
        log.error("cell delay=%s seed=%s failed in %s: %s", f["delay"], f["seed"], f["stage"], f["error"])
