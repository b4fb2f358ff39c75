"""Experiment orchestration: configs, sweeps, evaluation, importance and reports."""
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .experiment import eval_cell, run_eval, run_train, train_cell
from .importance import GroupScore, permutation_importance
from .report import run_report

__all__ = ["ConfigError", "ExperimentConfig", "dump_config", "load_config", "eval_cell", "run_eval",
           "run_train", "train_cell", "GroupScore", "permutation_importance", "run_report"]
