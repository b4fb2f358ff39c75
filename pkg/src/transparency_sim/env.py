"""Two-player market environment with delayed observability.

The state at step ``t`` is split into an immediately observable block ``s_I``
(quotes, spread, depth, own holdings, momentum) and a delayed block ``s_D``
(traded prices and volumes over the last ``trade_history`` steps). A player at
step ``t`` sees ``[s_I(t), s_D(t - delay)]``; when ``t - delay < 0`` the delayed
block is a NaN sentinel that the learner's normalizer maps to zero.

Players are the market maker ``"mm"`` (must quote both sides) and the
principal trader ``"pt"`` (buy, sell or hold).
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .background import (
    BackgroundConfig,
    consumer_act,
    fundamental_step,
    momentum_act,
    value_act,
)
from .orderbook import BUY, SELL, Order, OrderBook, Trade

MM, PT = "mm", "pt"
PLAYERS = (MM, PT)
AGENT_IDS = {MM: 0, PT: 1}
EXCHANGE_AGENT = -1
HOLD, BOTH = "hold", "both"
MOMENTUM_LAGS = (1, 10, 30)

FEATURE_GROUPS = ("quoted volume", "quoted price", "spread", "depth", "inventory", "cash",
                  "momentum", "traded volume", "traded price")
DELAYED_GROUPS = ("traded volume", "traded price")


@dataclass
class EnvConfig:
    horizon: int = 390
    delay: int = 0
    quote_history: int = 5
    trade_history: int = 5
    snapshot_levels: int = 5
    order_size: int = 100
    mm_halfspread_levels: Tuple[float, ...] = (0.5, 1.5, 2.5, 3.5, 4.5)
    gamma: float = 0.9999
    initial_mid: float = 10000.5
    seed: int = 0
    seed_levels: int = 5
    seed_volume: int = 200
    reseed_offset: int = 5
    observe_other_holdings: bool = False
    pt_allow_both: bool = False
    background: BackgroundConfig = field(default_factory=BackgroundConfig)

    def __post_init__(self):
        self.mm_halfspread_levels = tuple(float(h) for h in self.mm_halfspread_levels)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 <= self.delay <= self.horizon:
            raise ValueError(f"delay must lie in [0, {self.horizon}], got {self.delay}")
        if self.quote_history < 1 or self.trade_history < 1:
            raise ValueError("quote_history and trade_history must be >= 1")
        if self.snapshot_levels < 1 or self.order_size <= 0:
            raise ValueError("snapshot_levels must be >= 1 and order_size > 0")
        levels = self.mm_halfspread_levels
        if not levels or any(h <= 0 for h in levels) or list(levels) != sorted(levels):
            raise ValueError("mm_halfspread_levels must be non-empty, positive and sorted")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.initial_mid * 2 != int(self.initial_mid * 2) or self.initial_mid < 2:
            raise ValueError("initial_mid must be a positive multiple of half a cent")
        if self.seed_levels < 1 or self.seed_volume <= 0 or self.reseed_offset < 1:
            raise ValueError("bad book seeding parameters")

    @property
    def pt_sides(self) -> Tuple[str, ...]:
        return (BUY, SELL, HOLD, BOTH) if self.pt_allow_both else (BUY, SELL, HOLD)


@dataclass(frozen=True)
class MMAction:
    halfspread_index: int


@dataclass(frozen=True)
class PTAction:
    halfspread_index: int
    order_side: str


@dataclass
class StepResult:
    observations: Dict[str, np.ndarray]
    rewards: Dict[str, float]
    done: bool
    info: dict


@dataclass
class StepRecord:
    """Everything archived about the market at the end of one step."""
    step: int
    mid2: int
    spread: int
    depth2: int
    book_available: bool
    quote_features: np.ndarray
    trades: Tuple[Trade, ...]
    inventory: Dict[int, int]
    cash: Dict[int, int]


def buy_price(mid: Fraction, h: Fraction) -> int:
    return math.floor(mid - h)


def sell_price(mid: Fraction, h: Fraction) -> int:
    return math.ceil(mid + h)


def apply_mm_action(halfspread: float, mid2: int) -> List[Tuple[str, int]]:
    """Buy at mid - h (rounded down) and sell at mid + h (rounded up)."""
    mid, h = Fraction(mid2, 2), Fraction(halfspread)
    return [(BUY, buy_price(mid, h)), (SELL, sell_price(mid, h))]


def apply_pt_action(halfspread: float, side: str, mid2: int) -> List[Tuple[str, int]]:
    mid, h = Fraction(mid2, 2), Fraction(halfspread)
    if side == HOLD:
        return []
    if side == BUY:
        return [(BUY, buy_price(mid, h))]
    if side == SELL:
        return [(SELL, sell_price(mid, h))]
    if side == BOTH:
        return apply_mm_action(halfspread, mid2)
    raise ValueError(f"unknown order side {side!r}")


def portfolio_value2(cash: int, inventory: int, mid2: int) -> int:
    """Twice the mark-to-market value, in cents; an exact integer."""
    return 2 * cash + inventory * mid2


def compute_reward(cash_prev: int, inv_prev: int, mid2_prev: int,
                   cash_now: int, inv_now: int, mid2_now: int) -> float:
    """Change in mark-to-market portfolio value, in cents (exact to half a cent)."""
    return (portfolio_value2(cash_now, inv_now, mid2_now)
            - portfolio_value2(cash_prev, inv_prev, mid2_prev)) / 2


class DelayBuffer:
    """Append-only archive of the delayed state block, one entry per step."""

    def __init__(self, width: int):
        self.width = width
        self.archive: List[np.ndarray] = []
        self.sentinel = np.full(width, np.nan)

    def __len__(self):
        return len(self.archive)

    def append(self, step: int, block: np.ndarray):
        if step != len(self.archive):
            raise ValueError(f"archive holds steps 0..{len(self.archive) - 1}, cannot append step {step}")
        block = np.asarray(block, dtype=float)
        block.setflags(write=False)
        self.archive.append(block)

    def read(self, t: int, delay: int) -> np.ndarray:
        if t >= len(self.archive):
            raise IndexError(f"step {t} not archived yet")
        src = t - delay
        return self.archive[src] if src >= 0 else self.sentinel


def observation_layout(config: EnvConfig) -> Tuple[List[str], Dict[str, np.ndarray]]:
    """Feature names and the index set of each feature group.

    The layout depends only on the history lengths, the snapshot depth and the
    holdings-visibility switch, so both players share it.
    """
    names: List[str] = []
    groups: Dict[str, List[int]] = {g: [] for g in FEATURE_GROUPS}

    def add(name, group):
        groups[group].append(len(names))
        names.append(name)

    L, M, K = config.quote_history, config.trade_history, config.snapshot_levels
    for lag in range(L, -1, -1):
        for side in ("bid", "ask"):
            for k in range(K):
                add(f"{side}{k}_price_rel[t-{lag}]", "quoted price")
                add(f"{side}{k}_volume[t-{lag}]", "quoted volume")
    add("spread", "spread")
    add("depth", "depth")
    owners = ("own", "other") if config.observe_other_holdings else ("own",)
    for who in owners:
        add(f"{who}_inventory[t-1]", "inventory")
        add(f"{who}_inventory[t]", "inventory")
        add(f"{who}_cash[t-1]", "cash")
        add(f"{who}_cash[t]", "cash")
    for k in MOMENTUM_LAGS:
        add(f"momentum_{k}", "momentum")
    for lag in range(M, -1, -1):
        add(f"traded_buy_volume[t-d-{lag}]", "traded volume")
        add(f"traded_buy_vwap_rel[t-d-{lag}]", "traded price")
        add(f"traded_sell_volume[t-d-{lag}]", "traded volume")
        add(f"traded_sell_vwap_rel[t-d-{lag}]", "traded price")
    return names, {g: np.array(ix, dtype=int) for g, ix in groups.items()}


def _quote_features(bids, asks, mid2: int) -> np.ndarray:
    out = []
    for levels in (bids, asks):
        for price, vol in levels:
            out.append(price - mid2 / 2 if vol else 0.0)
            out.append(float(vol))
    return np.array(out, dtype=float)


def _trade_features(trades: Sequence[Trade], mid2: int) -> np.ndarray:
    bv = bn = sv = sn = 0
    for tr in trades:
        if tr.aggressor == BUY:
            bv += tr.volume
            bn += tr.price * tr.volume
        else:
            sv += tr.volume
            sn += tr.price * tr.volume
    # single integer division, so the value is the correctly rounded vwap - mid
    buy_rel = (2 * bn - mid2 * bv) / (2 * bv) if bv else 0.0
    sell_rel = (2 * sn - mid2 * sv) / (2 * sv) if sv else 0.0
    return np.array([bv, buy_rel, sv, sell_rel], dtype=float)


ActionLike = Union[MMAction, PTAction, Sequence[int]]


class MarketEnv:
    """Steppable two-player market.

    ``reset`` returns the step-0 observations; ``step`` takes one action per
    player (an :class:`MMAction` / :class:`PTAction` or a tuple of head indices)
    and advances the market by one step.
    """

    players = PLAYERS

    def __init__(self, config: EnvConfig, log: bool = False):
        self.config = config
        self.feature_names, self.feature_groups = observation_layout(config)
        self.obs_dim = len(self.feature_names)
        self.head_sizes = {MM: (len(config.mm_halfspread_levels),),
                           PT: (len(config.mm_halfspread_levels), len(config.pt_sides))}
        self.log = log
        self.t: Optional[int] = None

    # -- lifecycle -------------------------------------------------------
    def reset(self, seed: Union[int, np.random.Generator, None] = None) -> Dict[str, np.ndarray]:
        cfg = self.config
        if isinstance(seed, np.random.Generator):
            self.rng = seed
        else:
            self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.book = OrderBook()
        self.t = 0
        self._next_id = 0
        self.inventory: Dict[int, int] = {}
        self.cash: Dict[int, int] = {}
        self.live: Dict[str, List[int]] = {p: [] for p in PLAYERS}
        self.history: List[StepRecord] = []
        self.delay_buffer = DelayBuffer(4 * (cfg.trade_history + 1))
        self._trade_rows: List[np.ndarray] = []
        self.mid_history: List[float] = []
        self.episode_log: List[dict] = []
        bg = cfg.background
        self.fundamental = float(bg.value.fundamental_mean)
        self._bg_kinds = ["consumer"] * bg.n_consumer + ["momentum"] * bg.n_momentum + ["value"] * bg.n_value
        self._bg_ids = list(range(2, 2 + bg.size))

        best_bid = math.floor(cfg.initial_mid - 0.5)
        best_ask = math.ceil(cfg.initial_mid + 0.5)
        for k in range(cfg.seed_levels):
            if best_bid - k > 0:
                self._submit(EXCHANGE_AGENT, BUY, best_bid - k, cfg.seed_volume)
            self._submit(EXCHANGE_AGENT, SELL, best_ask + k, cfg.seed_volume)
        self._last_mid2 = best_bid + best_ask
        self._last_spread = best_ask - best_bid
        self._last_depth2 = 0
        self._archive(trades=())
        return {p: self.observe(p) for p in PLAYERS}

    @property
    def done(self) -> bool:
        return self.t is not None and self.t >= self.config.horizon

    def step(self, actions: Dict[str, ActionLike]) -> StepResult:
        if self.t is None:
            raise RuntimeError("call reset() before step()")
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        cfg = self.config
        self.t += 1
        tape_start = len(self.book.tape)
        mm_action = self._as_mm(actions[MM])
        pt_action = self._as_pt(actions[PT])

        # (1) cancel-and-replace the players' quotes
        mid2 = self._current_mid2()
        for player in PLAYERS:
            for oid in self.live[player]:
                self.book.cancel_order(oid)
            self.live[player] = []
        levels = cfg.mm_halfspread_levels
        mm_orders = apply_mm_action(levels[mm_action.halfspread_index], mid2)
        pt_orders = apply_pt_action(levels[pt_action.halfspread_index], pt_action.order_side, mid2)
        for player, orders in ((MM, mm_orders), (PT, pt_orders)):
            for side, price in orders:
                if price > 0:
                    self.live[player].append(self._submit(AGENT_IDS[player], side, price, cfg.order_size))

        # (2) background flow in a seeded random order
        self._background_step()
        # (3) exogenous value
        self.fundamental = fundamental_step(self.fundamental, cfg.background.value, self.rng)
        # (4) archive, reseeding an emptied side afterwards
        trades = tuple(self.book.tape[tape_start:])
        self._archive(trades)
        self._reseed_if_empty()
        for player in PLAYERS:
            self.live[player] = [oid for oid in self.live[player] if self.book.is_resting(oid)]

        # (5) rewards
        prev, now = self.history[-2], self.history[-1]
        rewards = {}
        for player in PLAYERS:
            aid = AGENT_IDS[player]
            rewards[player] = compute_reward(prev.cash[aid], prev.inventory[aid], prev.mid2,
                                             now.cash[aid], now.inventory[aid], now.mid2)
        # (6) observations
        obs = {p: self.observe(p) for p in PLAYERS}
        fills = {p: [(tr.price, tr.volume, BUY if tr.buy_agent == AGENT_IDS[p] else SELL)
                     for tr in trades if AGENT_IDS[p] in (tr.buy_agent, tr.sell_agent)]
                 for p in PLAYERS}
        info = {
            "step": self.t,
            "mid": now.mid2 / 2,
            "spread": now.spread,
            "n_trades": len(trades),
            "fills": fills,
            "halfspread": {MM: levels[mm_action.halfspread_index], PT: levels[pt_action.halfspread_index]},
            "pt_side": pt_action.order_side,
        }
        if self.log:
            self.episode_log.append({
                "step": self.t, "mid": now.mid2 / 2, "spread": now.spread,
                "mm_halfspread": info["halfspread"][MM],
                "pt_halfspread": info["halfspread"][PT], "pt_side": pt_action.order_side,
                "mm_fills": sum(v for _, v, _ in fills[MM]), "pt_fills": sum(v for _, v, _ in fills[PT]),
                "mm_reward": rewards[MM], "pt_reward": rewards[PT],
            })
        return StepResult(obs, rewards, self.done, info)

    # -- observation -----------------------------------------------------
    def immediate_block(self, player: str, t: Optional[int] = None) -> np.ndarray:
        cfg = self.config
        t = self.t if t is None else t
        rec = self.history[t]
        prev = self.history[max(t - 1, 0)]
        parts = [self.history[max(t - lag, 0)].quote_features for lag in range(cfg.quote_history, -1, -1)]
        owners = [AGENT_IDS[player]]
        if cfg.observe_other_holdings:
            owners.append(AGENT_IDS[PT if player == MM else MM])
        holdings = []
        for aid in owners:
            holdings += [prev.inventory[aid], rec.inventory[aid], prev.cash[aid], rec.cash[aid]]
        mids = self.mid_history
        momentum = [mids[t] / mids[t - k] if t >= k else 1.0 for k in MOMENTUM_LAGS]
        parts.append(np.array([rec.spread, rec.depth2 / 2, *holdings, *momentum], dtype=float))
        return np.concatenate(parts)

    def observe(self, player: str, t: Optional[int] = None) -> np.ndarray:
        t = self.t if t is None else t
        return build_observation(self, t, self.config.delay, player)

    def portfolio_value2(self, player: str, t: Optional[int] = None) -> int:
        rec = self.history[self.t if t is None else t]
        aid = AGENT_IDS[player]
        return portfolio_value2(rec.cash[aid], rec.inventory[aid], rec.mid2)

    # -- internals -------------------------------------------------------
    def _as_mm(self, action: ActionLike) -> MMAction:
        if not isinstance(action, MMAction):
            action = MMAction(int(action[0]))
        if not 0 <= action.halfspread_index < len(self.config.mm_halfspread_levels):
            raise IndexError(f"MM half-spread index {action.halfspread_index} out of range")
        return action

    def _as_pt(self, action: ActionLike) -> PTAction:
        sides = self.config.pt_sides
        if not isinstance(action, PTAction):
            action = PTAction(int(action[0]), sides[int(action[1])])
        if not 0 <= action.halfspread_index < len(self.config.mm_halfspread_levels):
            raise IndexError(f"PT half-spread index {action.halfspread_index} out of range")
        if action.order_side not in sides:
            raise ValueError(f"PT side {action.order_side!r} not in {sides}")
        return action

    def _submit(self, agent_id: int, side: str, price: int, volume: int) -> int:
        self._next_id += 1
        order = Order(self._next_id, agent_id, side, price, volume, submit_step=self.t)
        for tr in self.book.submit_limit_order(order):
            value = tr.price * tr.volume
            self.inventory[tr.buy_agent] = self.inventory.get(tr.buy_agent, 0) + tr.volume
            self.cash[tr.buy_agent] = self.cash.get(tr.buy_agent, 0) - value
            self.inventory[tr.sell_agent] = self.inventory.get(tr.sell_agent, 0) - tr.volume
            self.cash[tr.sell_agent] = self.cash.get(tr.sell_agent, 0) + value
        return order.order_id

    def _current_mid2(self) -> int:
        bb, ba = self.book.best_bid(), self.book.best_ask()
        if bb is None or ba is None:
            return self._last_mid2
        return bb + ba

    def _background_step(self):
        bg = self.config.background
        order = self.rng.permutation(len(self._bg_ids))
        for i in order:
            kind = self._bg_kinds[i]
            mid = self._current_mid2() / 2
            if kind == "consumer":
                intent = consumer_act(bg.consumer, mid, self.rng)
            elif kind == "momentum":
                intent = momentum_act(bg.momentum, self.mid_history, self.book.best_bid(),
                                      self.book.best_ask(), self.rng)
            else:
                intent = value_act(bg.value, self.fundamental, mid, self.book.best_bid(),
                                   self.book.best_ask(), self.rng)
            if intent is not None:
                side, price, volume = intent
                self._submit(self._bg_ids[i], side, price, volume)

    def _reseed_if_empty(self):
        cfg = self.config
        mid = Fraction(self._last_mid2, 2)
        if not self.book.bids:
            price = math.floor(mid - cfg.reseed_offset)
            if price > 0:
                self._submit(EXCHANGE_AGENT, BUY, price, cfg.seed_volume)
        if not self.book.asks:
            self._submit(EXCHANGE_AGENT, SELL, math.ceil(mid + cfg.reseed_offset), cfg.seed_volume)

    def _archive(self, trades: Tuple[Trade, ...]):
        cfg = self.config
        stats = self.book.market_stats(cfg.snapshot_levels)
        if stats.available:
            self._last_mid2, self._last_spread, self._last_depth2 = stats.mid2, stats.spread, stats.depth2
        inv = {AGENT_IDS[p]: self.inventory.get(AGENT_IDS[p], 0) for p in PLAYERS}
        cash = {AGENT_IDS[p]: self.cash.get(AGENT_IDS[p], 0) for p in PLAYERS}
        rec = StepRecord(self.t, self._last_mid2, self._last_spread, self._last_depth2, stats.available,
                         _quote_features(stats.bids, stats.asks, self._last_mid2), trades, inv, cash)
        self.history.append(rec)
        self.mid_history.append(rec.mid2 / 2)
        self._trade_rows.append(_trade_features(trades, rec.mid2))
        M = cfg.trade_history
        rows = [self._trade_rows[u] if u >= 0 else np.zeros(4) for u in range(self.t - M, self.t + 1)]
        self.delay_buffer.append(self.t, np.concatenate(rows))

    def write_episode_log(self, path) -> None:
        if not self.episode_log:
            return
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.episode_log[0]))
            writer.writeheader()
            writer.writerows(self.episode_log)


def build_observation(env: MarketEnv, t: int, delay: int, player: str) -> np.ndarray:
    """Concatenate ``s_I(t)`` for ``player`` with the archived ``s_D(t - delay)``."""
    if t >= len(env.history):
        raise IndexError(f"step {t} not archived yet")
    return np.concatenate([env.immediate_block(player, t), env.delay_buffer.read(t, delay)])


def make_env_factory(config: EnvConfig, log: bool = False):
    return functools.partial(MarketEnv, config, log=log)
