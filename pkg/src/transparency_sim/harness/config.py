"""Experiment configuration and its flat dotted-key YAML file format.

Every field is addressed by a dotted key, e.g.::

    experiment.delay_grid: [0, 60, 120, 180, 240, 300, 390]
    env.horizon: 390
    background.consumer.arrival_prob: 0.05
    mm.lr: 0.0003
    pt.lr: 0.0003

Nested mappings are accepted too and flattened on load. Unknown keys are an
error.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import yaml

from ..background import BackgroundConfig, ConsumerParams, MomentumParams, ValueParams, desk_background
from ..env import EnvConfig
from ..learner import LearnerConfig

DEFAULT_DELAY_GRID = (0, 60, 120, 180, 240, 300, 390)
SWF_MODES = ("per_episode", "mean_outcomes")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    delay_grid: Tuple[int, ...] = DEFAULT_DELAY_GRID
    seeds: Tuple[int, ...] = (0,)
    train_iterations: int = 50
    eval_episodes: int = 500
    kappa: float = 6.0
    eps_fraction: float = 0.01
    swf_mode: str = "per_episode"
    importance_repeats: int = 5
    importance_max_rows: int = 5000
    episode_logs: bool = False
    output_dir: str = "results"
    env: EnvConfig = field(default_factory=EnvConfig)
    mm: LearnerConfig = field(default_factory=LearnerConfig)
    pt: LearnerConfig = field(default_factory=LearnerConfig)

    def __post_init__(self):
        self.delay_grid = tuple(int(d) for d in self.delay_grid)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.validate()

    def validate(self):
        H = self.env.horizon
        if not self.delay_grid or any(not 0 <= d <= H for d in self.delay_grid):
            raise ConfigError(f"every delay must lie in [0, {H}], got {self.delay_grid}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if self.train_iterations < 0:
            raise ConfigError("train_iterations must be >= 0")
        if self.kappa in (0, 1):
            raise ConfigError("kappa must not be 0 or 1")
        if self.swf_mode not in SWF_MODES:
            raise ConfigError(f"swf_mode must be one of {SWF_MODES}")
        if self.mm.episodes_per_iteration != self.pt.episodes_per_iteration:
            raise ConfigError("mm and pt must share episodes_per_iteration")
        if not self.mm.gamma == self.pt.gamma == self.env.gamma:
            raise ConfigError("env.gamma, mm.gamma and pt.gamma must agree")

    def learner_configs(self) -> Dict[str, LearnerConfig]:
        return {p: dataclasses.replace(getattr(self, p), iterations=self.train_iterations)
                for p in ("mm", "pt")}

    def env_for(self, delay: int) -> EnvConfig:
        return dataclasses.replace(self.env, delay=int(delay))


def _flatten(obj, prefix="") -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            # the background roster sits at the top level of the file
            sub_prefix = "background." if f.name == "background" else f"{key}."
            out.update(_flatten(value, sub_prefix))
        elif isinstance(value, tuple):
            out[key] = list(value)
        else:
            out[key] = value
    return out


def to_flat_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    flat = {}
    for k, v in _flatten(cfg).items():
        if k.startswith(("env.", "mm.", "pt.", "background.")):
            flat[k] = v
        else:
            flat[f"experiment.{k}"] = v
    flat.pop("env.delay", None)
    return flat


def _nested_to_flat(data: Dict[str, Any], prefix="") -> Dict[str, Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_nested_to_flat(v, key + "."))
        else:
            out[key] = v
    return out


def _build(cls, values: Dict[str, Any], what: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what} settings: {exc}") from exc


def from_flat_dict(flat: Dict[str, Any]) -> ExperimentConfig:
    groups: Dict[str, Dict[str, Any]] = {k: {} for k in
                                          ("experiment", "env", "mm", "pt", "background",
                                           "consumer", "momentum", "value")}
    preset = None
    for key, value in flat.items():
        parts = key.split(".")
        if key == "background.preset":
            preset = value
            continue
        if parts[0] == "background" and len(parts) == 3 and parts[1] in ("consumer", "momentum", "value"):
            groups[parts[1]][parts[2]] = value
        elif len(parts) == 2 and parts[0] in groups:
            groups[parts[0]][parts[1]] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if preset not in (None, "default", "desk"):
        raise ConfigError(f"unknown background.preset {preset!r}")
    base = desk_background() if preset == "desk" else BackgroundConfig()
    consumer = _build(ConsumerParams, {**dataclasses.asdict(base.consumer), **groups["consumer"]}, "background.consumer")
    momentum = _build(MomentumParams, {**dataclasses.asdict(base.momentum), **groups["momentum"]}, "background.momentum")
    value_defaults = dataclasses.asdict(base.value)
    if "initial_mid" in groups["env"] and "fundamental_mean" not in groups["value"]:
        value_defaults["fundamental_mean"] = groups["env"]["initial_mid"]
    value = _build(ValueParams, {**value_defaults, **groups["value"]}, "background.value")
    roster = {"n_consumer": base.n_consumer, "n_momentum": base.n_momentum, "n_value": base.n_value,
              **groups["background"]}
    background = _build(BackgroundConfig, {**roster, "consumer": consumer, "momentum": momentum, "value": value},
                        "background")
    if "delay" in groups["env"]:
        raise ConfigError("env.delay is set per cell from experiment.delay_grid")
    env = _build(EnvConfig, {**groups["env"], "background": background}, "env")
    for player in ("mm", "pt"):
        groups[player].setdefault("gamma", env.gamma)
    mm = _build(LearnerConfig, groups["mm"], "mm")
    pt = _build(LearnerConfig, groups["pt"], "pt")
    return _build(ExperimentConfig, {**groups["experiment"], "env": env, "mm": mm, "pt": pt}, "experiment")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must be a mapping")
    return from_flat_dict(_nested_to_flat(data))


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_flat_dict(cfg), fh, sort_keys=True)
