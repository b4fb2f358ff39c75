"""Running observation and reward normalizers."""
from __future__ import annotations

import numpy as np


class RunningMeanVar:
    """Per-feature running mean and (population) variance.

    Batches are merged with Chan's parallel update. NaN entries are skipped,
    so each feature keeps its own count.
    """

    def __init__(self, shape=()):
        self.mean = np.zeros(shape)
        self.var = np.zeros(shape)
        self.count = np.zeros(shape)

    def update(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if x.ndim == self.mean.ndim:
            x = x[None]
        mask = ~np.isnan(x)
        n_b = mask.sum(axis=0).astype(float)
        safe = np.where(mask, x, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_b = np.where(n_b > 0, safe.sum(axis=0) / np.maximum(n_b, 1), 0.0)
            m2_b = (np.where(mask, x - mean_b, 0.0) ** 2).sum(axis=0)
        n_a = self.count
        n = n_a + n_b
        delta = mean_b - self.mean
        ratio = np.divide(n_b, n, out=np.zeros_like(n), where=n > 0)
        m2 = self.var * n_a + m2_b + delta ** 2 * n_a * ratio
        self.mean = self.mean + delta * ratio
        self.var = np.divide(m2, n, out=np.zeros_like(n), where=n > 0)
        self.count = n

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": self.count.copy()}

    def load(self, state: dict):
        self.mean, self.var, self.count = (np.array(state[k], dtype=float) for k in ("mean", "var", "count"))


class ObsNormalizer:
    """Standardize observations; NaN (unavailable) features map to 0."""

    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.stats = RunningMeanVar((dim,))
        self.clip = clip
        self.eps = eps

    def update(self, x):
        self.stats.update(x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=float) - self.stats.mean) / np.sqrt(self.stats.var + self.eps)
        z = np.clip(z, -self.clip, self.clip)
        return np.nan_to_num(z, nan=0.0)

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) * np.sqrt(self.stats.var + self.eps) + self.stats.mean


class RewardScaler:
    """Divide rewards by the running standard deviation of the discounted return."""

    def __init__(self, gamma: float, eps: float = 1e-8):
        self.gamma = gamma
        self.eps = eps
        self.stats = RunningMeanVar(())
        self.ret = 0.0

    def reset(self):
        self.ret = 0.0

    def __call__(self, reward: float, update: bool = True) -> float:
        if update:
            self.ret = self.gamma * self.ret + reward
            self.stats.update(np.array([self.ret]))
        return reward / np.sqrt(self.stats.var + self.eps)

    def inverse(self, scaled: float) -> float:
        return scaled * np.sqrt(self.stats.var + self.eps)
