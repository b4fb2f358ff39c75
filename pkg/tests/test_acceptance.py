"""End-to-end acceptance checks, one test per criterion.

Each test records a ``criterion N: PASS|FAIL ...`` line that is printed in the
pytest terminal summary. Criterion 7 is informational: its line is recorded
either way and the test does not fail on it.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import (bandit_trial, compare_with_list_book, fd_gradient_error, fuzz_book,
                     importance_with_blind_delayed_block, replay_delays, telescoping_gaps,
                     welfare_identity_failures)
from transparency_sim.env import EnvConfig
from transparency_sim.harness import cli
from transparency_sim.harness.config import load_config
from transparency_sim.harness.experiment import cell_dir, read_csv, run_eval, run_train
from transparency_sim.harness.report import run_report

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_criterion_1_orderbook_fuzz():
    t0 = time.perf_counter()
    crossed, violations = fuzz_book(100_000, seed=2024)
    mismatched = sum(not compare_with_list_book(seed) for seed in range(10_000))
    elapsed = time.perf_counter() - t0
    ok = crossed == 0 and violations == 0 and mismatched == 0 and elapsed < 30
    assert record(1, ok, f"crossed={crossed} conservation={violations} oracle_mismatch={mismatched}/10000 "
                         f"time={elapsed:.1f}s")


def test_criterion_2_delay_replay():
    t0 = time.perf_counter()
    cfg = EnvConfig()
    checked, bad = replay_delays(cfg, [0, 1, 7, 60, cfg.horizon], seed=11)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and checked == 5 * 2 * (cfg.horizon + 1) and elapsed < 60
    assert record(2, ok, f"delayed blocks checked={checked} mismatches={bad} time={elapsed:.1f}s")


def test_criterion_3_reward_telescoping():
    gaps = telescoping_gaps(EnvConfig(), episodes=100, seed=500)
    worst = max(gaps)
    assert record(3, worst == 0 and len(gaps) == 200, f"episodes=100 players=2 worst gap={worst} cents")


def test_criterion_4_welfare_identities():
    fails = welfare_identity_failures(1000, seed=7)
    assert record(4, not fails, f"random vectors=1000 failures={len(fails)} {fails[:2]}")


def test_criterion_5_learner_numerics():
    t0 = time.perf_counter()
    worst = max(fd_gradient_error(seed) for seed in range(50))
    correct = sum(bandit_trial(seed) == 1 for seed in range(20))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and correct >= 19 and elapsed < 120
    assert record(5, ok, f"max fd rel err={worst:.2e} bandit={correct}/20 time={elapsed:.1f}s")


@pytest.fixture(scope="module")
def desk_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    cfg = load_config(CONFIGS / "desk.yaml")
    t0 = time.perf_counter()
    train_failures = run_train(cfg, out)
    train_time = time.perf_counter() - t0
    eval_failures = run_eval(cfg, out)
    manifest = run_report(out)
    return cfg, out, train_failures + eval_failures, train_time, manifest


def test_criterion_6_training_convergence(desk_sweep):
    cfg, out, failures, train_time, _ = desk_sweep
    assert not failures
    improved = {}
    for delay in cfg.delay_grid:
        for player in ("mm", "pt"):
            wins = 0
            for seed in cfg.seeds:
                rows = read_csv(cell_dir(out, delay, seed) / "episode_returns.csv")
                x = np.array([float(r["discounted_return"]) for r in rows if r["player"] == player])
                assert len(x) == 200
                wins += x[-50:].mean() > x[:50].mean()
            improved[(delay, player)] = wins
    ok = all(w >= 4 for w in improved.values()) and train_time <= 600
    detail = " ".join(f"d{d}/{p}={w}/5" for (d, p), w in improved.items())
    assert record(6, ok, f"last-50 > first-50: {detail} train time={train_time:.0f}s")


def test_criterion_7_directional_trend(desk_sweep):
    # informational: the sign pattern is recorded but does not gate the suite
    cfg, out, _, _, manifest = desk_sweep
    trend = manifest["trend"]
    n = trend["seeds"]
    ok = trend["mm_positive"] > n / 2 and trend["pt_negative"] > n / 2
    record(7, ok, f"(non-gating) delay {min(cfg.delay_grid)}->{max(cfg.delay_grid)}: "
                  f"MM gains in {trend['mm_positive']}/{n} seeds, PT loses in {trend['pt_negative']}/{n} seeds")
    assert n == len(cfg.seeds)


def test_criterion_8_determinism(tmp_path):
    config = str(CONFIGS / "tiny.yaml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sweep", "--config", config, "--out", str(a)]) == 0
    assert cli.main(["sweep", "--config", config, "--out", str(b)]) == 0
    names = ("outcomes.csv", "strategies.csv", "welfare.csv")
    same = [(a / n).read_bytes() == (b / n).read_bytes() for n in names]
    assert record(8, all(same), " ".join(f"{n}={'identical' if s else 'differs'}" for n, s in zip(names, same)))


def test_criterion_9_importance_sanity():
    scores = importance_with_blind_delayed_block(seed=3, horizon=60, episodes=20)
    delayed = {k: (s["traded volume"], s["traded price"]) for k, s in scores.items()}
    ok = all(v == (0.0, 0.0) for v in delayed.values())
    detail = " ".join(f"{p}/head{h}: volume={v[0]} price={v[1]}" for (p, h), v in delayed.items())
    assert record(9, ok, detail)
