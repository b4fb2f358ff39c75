import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from oracles import importance_with_blind_delayed_block
from transparency_sim.env import EnvConfig, FEATURE_GROUPS, HOLD, MarketEnv
from transparency_sim.harness import cli
from transparency_sim.harness.config import (ConfigError, ExperimentConfig, dump_config, from_flat_dict,
                                             load_config, to_flat_dict)
from transparency_sim.harness.experiment import (SCHEMAS, cell_dir, ci95, eval_cell, load_checkpoint, read_csv,
                                                 save_checkpoint, welfare_row, write_csv)
from transparency_sim.harness.importance import permutation_importance
from transparency_sim.harness.report import run_report, trend_rows
from transparency_sim.learner import LearnerConfig
from transparency_sim.learner.network import init_params, policy_forward
from transparency_sim.learner.ppo import FixedPolicy, Learner

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


# -- config -------------------------------------------------------------------
def test_config_round_trip(tmp_path):
    cfg = load_config(CONFIGS / "desk.yaml")
    dump_config(cfg, tmp_path / "c.yaml")
    again = load_config(tmp_path / "c.yaml")
    assert again == cfg
    assert to_flat_dict(again) == to_flat_dict(cfg)


def test_shipped_configs_load():
    for path in CONFIGS.glob("*.yaml"):
        load_config(path)


def test_nested_yaml_accepted(tmp_path):
    (tmp_path / "c.yaml").write_text("env:\n  horizon: 30\nexperiment:\n  delay_grid: [0, 30]\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.env.horizon == 30 and cfg.delay_grid == (0, 30)


@pytest.mark.parametrize("flat", [
    {"env.delay": 3},
    {"env.nonsense": 1},
    {"experiment.delay_grid": [0, 500]},
    {"mm.gamma": 0.5},
    {"mm.episodes_per_iteration": 3},
    {"background.preset": "huge"},
    {"experiment.kappa": 1.0},
    {"experiment.swf_mode": "median"},
    {"pt.clip": -1},
])
def test_config_errors(flat):
    with pytest.raises(ConfigError):
        from_flat_dict(flat)


def test_gamma_and_mid_propagate():
    cfg = from_flat_dict({"env.gamma": 0.99, "env.initial_mid": 5000.5})
    assert cfg.mm.gamma == cfg.pt.gamma == 0.99
    assert cfg.env.background.value.fundamental_mean == 5000.5


def test_learner_iterations_follow_experiment():
    cfg = from_flat_dict({"experiment.train_iterations": 7})
    assert {c.iterations for c in cfg.learner_configs().values()} == {7}


# -- csv, checkpoints -----------------------------------------------------------
def test_csv_round_trip(tmp_path):
    rows = [{"delay": 0, "seed": 1, "player": "mm", "mean_halfspread": 0.1 + 0.2, "pct_hold": None}]
    write_csv(tmp_path / "s.csv", "strategies", rows)
    text = (tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "# strategies schema v1"
    back = read_csv(tmp_path / "s.csv")
    assert float(back[0]["mean_halfspread"]) == 0.1 + 0.2
    assert back[0]["pct_hold"] == ""


def test_checkpoint_round_trip(tmp_path):
    learner = Learner(7, (5, 3), LearnerConfig(hidden=(6, 4)), np.random.default_rng(0))
    learner.obs_norm.update(np.random.default_rng(1).normal(size=(10, 7)))
    save_checkpoint(tmp_path / "c.npz", learner, "pt")
    back = load_checkpoint(tmp_path / "c.npz")
    assert all(np.array_equal(a, b) for a, b in zip(learner.params.arrays(), back.params.arrays()))
    assert np.array_equal(back.obs_norm.stats.mean, learner.obs_norm.stats.mean)
    x = np.random.default_rng(2).normal(size=7)
    assert back.greedy(back.normalize(x)) == learner.greedy(learner.normalize(x))


def test_ci95():
    assert ci95([1.0]) == 0.0
    assert ci95([1.0, 3.0]) == pytest.approx(1.96 * np.sqrt(2) / np.sqrt(2))


# -- welfare rows ---------------------------------------------------------------
def test_welfare_row_from_cent_outcomes():
    cfg = ExperimentConfig()
    row = welfare_row(0, 0, [100.0], [300.0], cfg)
    assert row["mean"] == 2.0
    assert row["swf_ge"] == pytest.approx(1.709799, abs=1e-6)
    assert row["swf_theil"] == pytest.approx(np.sqrt(3), abs=1e-12)
    assert row["applied_shift"] == 0.0


def test_welfare_row_shifts_losses():
    cfg = ExperimentConfig()
    row = welfare_row(0, 0, [-500.0], [500.0], cfg)
    assert row["applied_shift"] == pytest.approx(5.05)
    both = welfare_row(0, 0, [0.0], [0.0], cfg)
    assert both["swf_ge"] == pytest.approx(0.0001)


def test_welfare_modes_differ_only_in_aggregation():
    per = ExperimentConfig()
    pooled = dataclasses.replace(ExperimentConfig(), swf_mode="mean_outcomes")
    mm, pt = [100.0, 300.0], [300.0, 100.0]
    assert welfare_row(0, 0, mm, pt, pooled)["swf_ge"] == pytest.approx(2.0)
    assert welfare_row(0, 0, mm, pt, per)["swf_ge"] == pytest.approx(1.709799, abs=1e-6)


# -- evaluation cell --------------------------------------------------------------
def tiny_experiment(**kw):
    return load_config(CONFIGS / "tiny.yaml") if not kw else dataclasses.replace(load_config(CONFIGS / "tiny.yaml"), **kw)


def test_hold_always_pt_statistics(tmp_path):
    cfg = tiny_experiment()
    hold = cfg.env.pt_sides.index(HOLD)
    res = eval_cell(cfg, 0, 0, tmp_path, policies={"mm": FixedPolicy((1,)), "pt": FixedPolicy((3, hold))})
    pt = [r for r in res["strategies"] if r["player"] == "pt"][0]
    assert pt["pct_hold"] == 100.0
    assert pt["mean_halfspread"] == cfg.env.mm_halfspread_levels[3]
    assert all(r["outcome"] == 0.0 for r in res["episodes"] if r["player"] == "pt")
    assert res["importance"] == []


def test_missing_checkpoint_is_a_failure(tmp_path):
    res = eval_cell(tiny_experiment(), 0, 0, tmp_path)
    assert res["failure"]["stage"] == "eval"


# -- importance ---------------------------------------------------------------------
def test_importance_zero_for_unused_group():
    rng = np.random.default_rng(0)
    params = init_params(6, (3,), rng, hidden=(8,))
    params.actor[-2] *= 50
    params.actor[0][4:, :] = 0.0
    X = rng.normal(size=(300, 6))
    groups = {"used": np.arange(4), "unused": np.array([4, 5])}
    scores = {s.group: s.score for s in permutation_importance(params, X, 0, groups, rng=1, repeats=3)}
    assert scores["unused"] == 0.0 and scores["used"] > 0.0


def test_importance_ignores_row_order():
    rng = np.random.default_rng(3)
    params = init_params(5, (4,), rng, hidden=(8,))
    params.actor[-2] *= 50
    X = rng.normal(size=(200, 5))
    groups = {"a": [0, 1], "b": [2], "c": [3, 4]}
    s1 = permutation_importance(params, X, 0, groups, rng=7)
    s2 = permutation_importance(params, X[rng.permutation(200)], 0, groups, rng=7)
    assert s1 == s2


def test_importance_brute_force_single_repeat():
    rng = np.random.default_rng(4)
    params = init_params(3, (3,), rng, hidden=(6,))
    params.actor[-2] *= 50
    X = rng.normal(size=(50, 3))
    got = permutation_importance(params, X, 0, {"x": [1]}, rng=9, repeats=1)[0].score
    Xs = X[np.lexsort(X.T[::-1])]
    base = policy_forward(params, Xs)[0][0].argmax(axis=1)
    perm = np.random.default_rng([9, 0]).permutation(50)
    Xp = Xs.copy()
    Xp[:, 1] = Xs[perm, 1]
    assert got == np.mean(policy_forward(params, Xp)[0][0].argmax(axis=1) != base)


def test_importance_stable_under_duplication():
    rng = np.random.default_rng(5)
    params = init_params(4, (3,), rng, hidden=(8,))
    params.actor[-2] *= 50
    X = rng.normal(size=(400, 4))
    groups = {"a": [0], "b": [1, 2], "c": [3]}
    once = {s.group: s.score for s in permutation_importance(params, X, 0, groups, rng=2, repeats=20)}
    twice = {s.group: s.score for s in permutation_importance(params, np.vstack([X, X]), 0, groups, rng=2, repeats=20)}
    # a permutation resample of n rows has sampling error of order 1/sqrt(n)
    for g in groups:
        assert abs(once[g] - twice[g]) < 0.05


def test_importance_empty_raises():
    with pytest.raises(ValueError):
        permutation_importance(init_params(2, (2,), np.random.default_rng(0)), np.empty((0, 2)), 0, {"a": [0]})


def test_blind_policy_ignores_delayed_groups():
    scores = importance_with_blind_delayed_block(horizon=30, episodes=5)
    for s in scores.values():
        assert s["traded volume"] == 0.0 and s["traded price"] == 0.0
        assert max(s.values()) > 0.0


# -- sweeps, report and CLI ------------------------------------------------------------
@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    assert cli.main(["sweep", "--config", str(CONFIGS / "tiny.yaml"), "--out", str(out)]) == 0
    return out


def test_sweep_outputs(sweep_dir):
    for name in ("training_curves", "episodes", "outcomes", "strategies", "welfare", "importance"):
        lines = (sweep_dir / f"{name}.csv").read_text().splitlines()
        assert lines[0] == f"# {name} schema v1"
        assert lines[1].split(",") == SCHEMAS[name]
    cfg = load_config(sweep_dir / "config.resolved.yaml")
    assert cfg == load_config(CONFIGS / "tiny.yaml")
    assert (cell_dir(sweep_dir, 10, 1) / "checkpoint_pt.npz").exists()
    manifest = json.loads((sweep_dir / "report" / "manifest.json").read_text())
    assert manifest["warnings"] == []
    for f in manifest["files"]:
        assert (sweep_dir / "report" / f).exists()


def test_outcomes_recomputed_from_episodes(sweep_dir):
    episodes = read_csv(sweep_dir / "episodes.csv")
    for row in read_csv(sweep_dir / "outcomes.csv"):
        ys = [float(e["outcome"]) for e in episodes
              if (e["delay"], e["seed"], e["player"]) == (row["delay"], row["seed"], row["player"])]
        assert len(ys) == int(row["episodes"])
        assert float(row["mean_outcome"]) == float(np.mean(ys))
        assert float(row["ci95_halfwidth"]) == ci95(ys)


def test_welfare_recomputed_from_episodes(sweep_dir):
    cfg = load_config(sweep_dir / "config.resolved.yaml")
    episodes = read_csv(sweep_dir / "episodes.csv")
    for row in read_csv(sweep_dir / "welfare.csv"):
        pick = lambda p: [float(e["outcome"]) for e in episodes
                          if (e["delay"], e["seed"], e["player"]) == (row["delay"], row["seed"], p)]
        again = welfare_row(int(row["delay"]), int(row["seed"]), pick("mm"), pick("pt"), cfg)
        assert float(row["swf_ge"]) == again["swf_ge"]
        assert float(row["swf_theil"]) == again["swf_theil"]


def test_importance_covers_every_group(sweep_dir):
    rows = read_csv(sweep_dir / "importance.csv")
    for key in {(r["delay"], r["seed"], r["player"], r["head"]) for r in rows}:
        groups = [r["group"] for r in rows if (r["delay"], r["seed"], r["player"], r["head"]) == key]
        assert sorted(groups) == sorted(FEATURE_GROUPS)


def test_report_summaries(sweep_dir):
    summary = read_csv(sweep_dir / "report" / "summary_outcomes.csv")
    assert {(r["delay"], r["player"]) for r in summary} == {("0", "mm"), ("0", "pt"), ("10", "mm"), ("10", "pt")}
    assert all(int(r["episodes"]) == 6 for r in summary)
    assert len(read_csv(sweep_dir / "report" / "trend.csv")) == 2


def test_sweep_is_byte_identical(sweep_dir, tmp_path):
    assert cli.main(["sweep", "--config", str(CONFIGS / "tiny.yaml"), "--out", str(tmp_path)]) == 0
    for name in ("outcomes.csv", "strategies.csv", "welfare.csv", "training_curves.csv", "importance.csv"):
        assert (tmp_path / name).read_bytes() == (sweep_dir / name).read_bytes()


def test_seed_offset_shifts_cells(tmp_path):
    cfg = tmp_path / "c.yaml"
    data = yaml.safe_load((CONFIGS / "tiny.yaml").read_text())
    data.update({"experiment.delay_grid": [0], "experiment.seeds": [0]})
    cfg.write_text(yaml.safe_dump(data))
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed-offset", "5"]) == 0
    assert cell_dir(tmp_path / "o", 0, 5).exists()


def test_cli_config_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("env.delay: 3\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["train", "--config", str(tmp_path / "absent.yaml"), "--out", str(tmp_path / "o")]) == 1


def test_cli_partial_failure(sweep_dir, tmp_path):
    import shutil
    out = tmp_path / "copy"
    shutil.copytree(sweep_dir, out)
    shutil.rmtree(cell_dir(out, 10, 1))
    assert cli.main(["eval", "--config", str(CONFIGS / "tiny.yaml"), "--out", str(out)]) == 2
    failures = read_csv(out / "failures.csv")
    assert [(f["delay"], f["seed"]) for f in failures] == [("10", "1")]
    manifest = run_report(out)
    assert any("delay=10 seed=1" in w for w in manifest["warnings"])


def test_zero_iteration_single_cell(tmp_path):
    cfg = tmp_path / "c.yaml"
    data = yaml.safe_load((CONFIGS / "tiny.yaml").read_text())
    data.update({"experiment.delay_grid": [5], "experiment.seeds": [2], "experiment.train_iterations": 0})
    cfg.write_text(yaml.safe_dump(data))
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert (cell_dir(out, 5, 2) / "checkpoint_mm.npz").exists()
    assert read_csv(out / "training_curves.csv") == []
    summary = read_csv(out / "report" / "summary_welfare.csv")
    assert len(summary) == 1 and summary[0]["delay"] == "5"
    assert (out / "report" / "welfare.svg").exists()


def test_trend_rows_signs():
    rows = []
    for seed, (mm_lo, mm_hi, pt_lo, pt_hi) in enumerate([(0, 5, 5, 0), (5, 0, 0, 5)]):
        for delay, mm, pt in ((0, mm_lo, pt_lo), (60, mm_hi, pt_hi)):
            rows += [{"seed": seed, "delay": delay, "player": "mm", "outcome": mm},
                     {"seed": seed, "delay": delay, "player": "pt", "outcome": pt}]
    trend = trend_rows(rows)
    assert [(r["mm_positive"], r["pt_negative"]) for r in trend] == [(True, True), (False, False)]
