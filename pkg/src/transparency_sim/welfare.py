"""Inequality indices and equality-weighted social welfare functions."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np


def _positive(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("outcomes must be a non-empty 1-d sequence")
    if not np.all(y > 0):
        raise ValueError("inequality indices need strictly positive outcomes; sanitize first")
    return y


def ge_index(y: Sequence[float], kappa: float) -> float:
    """Generalized entropy index GE_kappa for kappa not in {0, 1}."""
    if kappa in (0, 1):
        raise ValueError("GE is undefined at kappa in {0, 1}; use theil_l for the kappa -> 0 limit")
    y = _positive(y)
    ratios = y / y.mean()
    # expm1 keeps precision for kappa near 0
    value = np.sum(np.expm1(kappa * np.log(ratios))) / (y.size * kappa * (kappa - 1.0))
    # the index is non-negative; clamp round-off on near-equal inputs
    return max(float(value), 0.0)


def theil_l(y: Sequence[float]) -> float:
    """Theil-L (mean log deviation)."""
    y = _positive(y)
    return max(float(-np.mean(np.log(y / y.mean()))), 0.0)


def sanitize_outcomes(y: Sequence[float], eps_fraction: float = 0.01, unit: float = 1.0) -> Tuple[np.ndarray, float]:
    """Shift outcomes to be strictly positive when any is <= 0.

    The shift is ``-min(y) + eps_fraction * mean(|y|)``, falling back to
    ``eps_fraction * unit`` when every outcome is zero.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("no outcomes to sanitize")
    if y.min() > 0:
        return y.copy(), 0.0
    pad = eps_fraction * np.abs(y).mean()
    if pad == 0:
        pad = eps_fraction * unit
    shift = float(-y.min() + pad)
    return y + shift, shift


@dataclass
class WelfareReport:
    mean: float
    ge_index: float
    theil_l: float
    equality_ge: float
    equality_theil: float
    swf_ge: float
    swf_theil: float
    kappa: float
    applied_shift: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def swf(y: Sequence[float], kappa: float = 6.0, applied_shift: float = 0.0) -> WelfareReport:
    """Both equality-weighted welfare values: exp(-index) times the mean outcome."""
    y = _positive(y)
    mean = float(y.mean())
    ge = ge_index(y, kappa)
    tl = theil_l(y)
    eq_ge, eq_tl = float(np.exp(-ge)), float(np.exp(-tl))
    return WelfareReport(mean, ge, tl, eq_ge, eq_tl, eq_ge * mean, eq_tl * mean, kappa, applied_shift)


def sanitized_swf(y: Sequence[float], kappa: float = 6.0, eps_fraction: float = 0.01,
                  unit: float = 1.0) -> WelfareReport:
    shifted, shift = sanitize_outcomes(y, eps_fraction, unit)
    return swf(shifted, kappa, shift)
