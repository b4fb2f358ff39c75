"""Rule-based background traders: consumers, momentum followers and value traders.

Decision functions are pure given an rng; the environment owns order ids and
per-agent bookkeeping. Each returns ``None`` or an ``(side, price, volume)``
intent which the environment stamps into an :class:`Order`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .orderbook import BUY, SELL

Intent = Tuple[str, int, int]


@dataclass
class ConsumerParams:
    arrival_prob: float = 0.05
    max_offset: int = 5
    order_size: int = 100

    def __post_init__(self):
        if not 0 <= self.arrival_prob <= 1:
            raise ValueError("arrival_prob must lie in [0, 1]")
        if self.max_offset < 0 or self.order_size <= 0:
            raise ValueError("max_offset must be >= 0 and order_size > 0")


@dataclass
class MomentumParams:
    short_window: int = 5
    long_window: int = 20
    order_size: int = 100
    arrival_prob: float = 0.3

    def __post_init__(self):
        if not 0 < self.short_window < self.long_window:
            raise ValueError("need 0 < short_window < long_window")
        if not 0 <= self.arrival_prob <= 1 or self.order_size <= 0:
            raise ValueError("bad arrival_prob or order_size")


@dataclass
class ValueParams:
    fundamental_mean: float = 10000.5
    reversion_rate: float = 0.05
    volatility: float = 2.0
    order_size: int = 100
    arrival_prob: float = 0.3

    def __post_init__(self):
        if not 0 < self.reversion_rate <= 1:
            raise ValueError("reversion_rate must lie in (0, 1]")
        if self.volatility < 0:
            raise ValueError("volatility must be >= 0")
        if not 0 <= self.arrival_prob <= 1 or self.order_size <= 0:
            raise ValueError("bad arrival_prob or order_size")


@dataclass
class BackgroundConfig:
    n_consumer: int = 20
    n_momentum: int = 2
    n_value: int = 2
    consumer: ConsumerParams = field(default_factory=ConsumerParams)
    momentum: MomentumParams = field(default_factory=MomentumParams)
    value: ValueParams = field(default_factory=ValueParams)

    @property
    def size(self) -> int:
        return self.n_consumer + self.n_momentum + self.n_value


def desk_background(fundamental_mean: float = 10000.5) -> BackgroundConfig:
    """Four-trader roster (2 consumer, 1 momentum, 1 value) for quick experiments."""
    return BackgroundConfig(
        n_consumer=2, n_momentum=1, n_value=1,
        consumer=ConsumerParams(arrival_prob=0.5, max_offset=3),
        momentum=MomentumParams(short_window=3, long_window=10, arrival_prob=0.5),
        value=ValueParams(fundamental_mean=fundamental_mean, reversion_rate=0.1, volatility=1.0,
                          arrival_prob=0.5),
    )


def fundamental_step(current: float, params: ValueParams, rng: np.random.Generator) -> float:
    """One step of the mean-reverting Gaussian value process, floored at 1 cent."""
    if current <= 0:
        raise ValueError("current fundamental value must be positive")
    nxt = current + params.reversion_rate * (params.fundamental_mean - current)
    if params.volatility:
        nxt += params.volatility * rng.standard_normal()
    return max(nxt, 1.0)


def consumer_act(params: ConsumerParams, mid: float, rng: np.random.Generator) -> Optional[Intent]:
    # draws are taken unconditionally so the rng stream does not depend on the outcome
    arrive, side_u, offset = rng.random(), rng.random(), rng.integers(0, params.max_offset + 1)
    if arrive >= params.arrival_prob:
        return None
    if side_u < 0.5:
        return BUY, max(math.floor(mid) - int(offset), 1), params.order_size
    return SELL, math.ceil(mid) + int(offset), params.order_size


def moving_average_signal(mid_history: Sequence[float], short_window: int, long_window: int) -> int:
    """+1 if the short moving average is above the long one, -1 if below, 0 if equal."""
    if len(mid_history) < long_window:
        return 0
    recent = np.asarray(mid_history[-long_window:], dtype=float)
    short = recent[-short_window:].mean()
    long = recent.mean()
    if math.isclose(short, long, rel_tol=0, abs_tol=1e-9):
        return 0
    return 1 if short > long else -1


def momentum_act(params: MomentumParams, mid_history: Sequence[float],
                 best_bid: Optional[int], best_ask: Optional[int],
                 rng: np.random.Generator) -> Optional[Intent]:
    if rng.random() >= params.arrival_prob:
        return None
    signal = moving_average_signal(mid_history, params.short_window, params.long_window)
    if signal > 0 and best_ask is not None:
        return BUY, best_ask, params.order_size
    if signal < 0 and best_bid is not None:
        return SELL, best_bid, params.order_size
    return None


def value_act(params: ValueParams, fundamental: float, mid: float,
              best_bid: Optional[int], best_ask: Optional[int],
              rng: np.random.Generator) -> Optional[Intent]:
    if rng.random() >= params.arrival_prob:
        return None
    if fundamental > mid and best_ask is not None:
        return BUY, best_ask, params.order_size
    if fundamental < mid and best_bid is not None:
        return SELL, best_bid, params.order_size
    return None
