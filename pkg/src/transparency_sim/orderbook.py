"""Limit order book with price-time priority matching.

Prices are integer cents. The mid-price has half-cent resolution, so the book
reports it through ``mid2`` (bid + ask, an integer) and exposes ``mid`` as an
exact float.
"""
from __future__ import annotations

import bisect
import csv
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Tuple

BUY = "buy"
SELL = "sell"
SIDES = (BUY, SELL)


class DuplicateOrderError(ValueError):
    """Raised when an order id has already been seen by the book."""


@dataclass
class Order:
    order_id: int
    agent_id: int
    side: str
    price: int
    volume: int
    submit_step: int = 0
    sequence: int = 0  # stamped by the book on arrival

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        if int(self.price) != self.price or self.price <= 0:
            raise ValueError(f"price must be a positive integer number of cents, got {self.price}")
        if int(self.volume) != self.volume or self.volume <= 0:
            raise ValueError(f"volume must be a positive integer, got {self.volume}")
        self.price = int(self.price)
        self.volume = int(self.volume)


@dataclass(frozen=True)
class Trade:
    buy_order_id: int
    sell_order_id: int
    price: int
    volume: int
    step: int
    buy_agent: int
    sell_agent: int
    aggressor: str  # side of the incoming order


@dataclass(frozen=True)
class BookSnapshot:
    bids: Tuple[Tuple[int, int], ...]
    asks: Tuple[Tuple[int, int], ...]
    step: int


@dataclass(frozen=True)
class MarketStats:
    available: bool
    best_bid: Optional[int]
    best_ask: Optional[int]
    mid2: Optional[int]
    spread: Optional[int]
    depth2: Optional[int]
    bids: Tuple[Tuple[int, int], ...]
    asks: Tuple[Tuple[int, int], ...]

    @property
    def mid(self) -> Optional[float]:
        return None if self.mid2 is None else self.mid2 / 2

    @property
    def depth(self) -> Optional[float]:
        return None if self.depth2 is None else self.depth2 / 2


@dataclass(eq=False)
class _Resting:
    order: Order
    remaining: int


class _Side:
    """One side of the book: price levels of FIFO queues.

    ``keys`` holds sort keys ascending, where the best price comes first
    (negated prices on the bid side).
    """

    def __init__(self, side: str):
        self.side = side
        self.sign = -1 if side == BUY else 1
        self.keys: List[int] = []
        self.levels: Dict[int, Deque[_Resting]] = {}
        self.volume: Dict[int, int] = {}

    def __bool__(self):
        return bool(self.keys)

    def best(self) -> Optional[int]:
        return self.sign * self.keys[0] if self.keys else None

    def worst(self) -> Optional[int]:
        return self.sign * self.keys[-1] if self.keys else None

    def add(self, rest: _Resting):
        price = rest.order.price
        queue = self.levels.get(price)
        if queue is None:
            queue = self.levels[price] = deque()
            self.volume[price] = 0
            bisect.insort(self.keys, self.sign * price)
        queue.append(rest)
        self.volume[price] += rest.remaining

    def drop_level(self, price: int):
        del self.levels[price]
        del self.volume[price]
        idx = bisect.bisect_left(self.keys, self.sign * price)
        del self.keys[idx]

    def top(self, n: int) -> Tuple[Tuple[int, int], ...]:
        out = []
        for key in self.keys[:n]:
            price = self.sign * key
            out.append((price, self.volume[price]))
        return tuple(out)


class OrderBook:
    """Continuous double auction for a single symbol.

    >>> book = OrderBook()
    >>> _ = book.submit_limit_order(Order(1, 0, "sell", 10001, 300))
    >>> [t.volume for t in book.submit_limit_order(Order(2, 1, "buy", 10001, 100))]
    [100]
    """

    def __init__(self):
        self.bids = _Side(BUY)
        self.asks = _Side(SELL)
        self.tape: List[Trade] = []
        self._resting: Dict[int, Tuple[_Side, _Resting]] = {}
        self._seen: set = set()
        self._last_step = 0
        self._sequence = 0

    def _side(self, side: str) -> _Side:
        return self.bids if side == BUY else self.asks

    def submit_limit_order(self, order: Order) -> List[Trade]:
        """Match ``order`` against the opposite side, then rest any residual.

        Trades execute at the resting order's price, best price first and
        oldest first within a price level.
        """
        if order.order_id in self._seen:
            raise DuplicateOrderError(f"order id {order.order_id} already used")
        if order.submit_step < self._last_step:
            raise ValueError(f"order submitted at step {order.submit_step} after step {self._last_step}")
        self._seen.add(order.order_id)
        self._last_step = order.submit_step
        self._sequence += 1
        order.sequence = self._sequence

        own = self._side(order.side)
        other = self.asks if order.side == BUY else self.bids
        remaining = order.volume
        trades: List[Trade] = []
        while remaining and other.keys:
            price = other.sign * other.keys[0]
            if (order.side == BUY and price > order.price) or (order.side == SELL and price < order.price):
                break
            queue = other.levels[price]
            while remaining and queue:
                rest = queue[0]
                qty = min(remaining, rest.remaining)
                if order.side == BUY:
                    buy, sell = order, rest.order
                else:
                    buy, sell = rest.order, order
                trades.append(Trade(buy.order_id, sell.order_id, price, qty, order.submit_step,
                                    buy.agent_id, sell.agent_id, order.side))
                remaining -= qty
                rest.remaining -= qty
                other.volume[price] -= qty
                if rest.remaining == 0:
                    queue.popleft()
                    del self._resting[rest.order.order_id]
            if not queue:
                other.drop_level(price)
        if remaining:
            rest = _Resting(order, remaining)
            own.add(rest)
            self._resting[order.order_id] = (own, rest)
        self.tape.extend(trades)
        return trades

    def cancel_order(self, order_id: int) -> bool:
        """Remove the residual of a resting order. Returns False if not found."""
        entry = self._resting.pop(order_id, None)
        if entry is None:
            return False
        side, rest = entry
        price = rest.order.price
        side.levels[price].remove(rest)
        side.volume[price] -= rest.remaining
        if not side.levels[price]:
            side.drop_level(price)
        return True

    def remaining(self, order_id: int) -> int:
        entry = self._resting.get(order_id)
        return 0 if entry is None else entry[1].remaining

    def is_resting(self, order_id: int) -> bool:
        return order_id in self._resting

    def best_bid(self) -> Optional[int]:
        return self.bids.best()

    def best_ask(self) -> Optional[int]:
        return self.asks.best()

    def snapshot(self, step: int = 0, levels: Optional[int] = None) -> BookSnapshot:
        n = len(self.bids.keys) + len(self.asks.keys) if levels is None else levels
        return BookSnapshot(self.bids.top(n), self.asks.top(n), step)

    def market_stats(self, levels: int) -> MarketStats:
        """Touch, mid, spread, depth and the top ``levels`` per side (zero padded)."""
        pad = ((0, 0),) * levels
        bids = (self.bids.top(levels) + pad)[:levels]
        asks = (self.asks.top(levels) + pad)[:levels]
        if not (self.bids and self.asks):
            return MarketStats(False, self.bids.best(), self.asks.best(), None, None, None, bids, asks)
        bb, ba = self.bids.best(), self.asks.best()
        return MarketStats(True, bb, ba, bb + ba, ba - bb, self.asks.worst() - self.bids.worst(), bids, asks)

    def trades_since(self, start: int) -> List[Trade]:
        return self.tape[start:]


def write_tape_csv(trades: Iterable[Trade], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "price", "volume", "buy_agent", "sell_agent"])
        for t in trades:
            writer.writerow([t.step, t.price, t.volume, t.buy_agent, t.sell_agent])
