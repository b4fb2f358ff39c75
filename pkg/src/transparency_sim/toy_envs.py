"""Tiny environments with known optima, used to check the learner."""
from __future__ import annotations

import numpy as np

from .env import StepResult


class BanditEnv:
    """Single-step, single-player two-armed bandit: one arm pays 1, the other 0."""

    players = ("agent",)

    def __init__(self, good_arm: int = 1, n_arms: int = 2, obs_dim: int = 2):
        self.good_arm = good_arm
        self.obs_dim = obs_dim
        self.head_sizes = {"agent": (n_arms,)}

    def reset(self, seed=None):
        self.t = 0
        return {"agent": np.ones(self.obs_dim)}

    def step(self, actions):
        arm = int(actions["agent"][0])
        self.t += 1
        reward = 1.0 if arm == self.good_arm else 0.0
        return StepResult({"agent": np.ones(self.obs_dim)}, {"agent": reward}, True, {"arm": arm})
