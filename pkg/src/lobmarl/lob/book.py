"""Fixed-capacity limit order book.

:class:`OrderBook` owns the arrays the numba kernels operate on. Methods
mutate in place for the hot path; the module-level functions
(:func:`process_message`, :func:`init_from_l2`) follow value semantics and
return a fresh book.
"""
from __future__ import annotations

import numpy as np

from . import kernel as K
from .types import (
    MSG_WIDTH, SYNTH_ID_BASE, L2Snapshot, Message, Side, TradeRecord, trades_from_array,
)

DEFAULT_CAPACITY = 100


class CapacityError(ValueError):
    pass


class OrderBook:
    __slots__ = ("orders", "counts", "meta", "allow_self_trade", "protect_agent_orders")

    def __init__(self, capacity: int = DEFAULT_CAPACITY, *, allow_self_trade: bool = True,
                 protect_agent_orders: bool = False):
        if capacity < 1:
            raise CapacityError(f"book capacity must be >= 1, got {capacity}")
        self.orders = np.zeros((2, capacity, K.O_WIDTH), dtype=np.int64)
        self.counts = np.zeros(2, dtype=np.int64)
        self.meta = np.zeros(K.M_WIDTH, dtype=np.int64)
        self.allow_self_trade = allow_self_trade
        self.protect_agent_orders = protect_agent_orders

    @property
    def capacity(self) -> int:
        return self.orders.shape[1]

    @property
    def next_seq(self) -> int:
        return int(self.meta[K.M_NEXT_SEQ])

    @property
    def evicted(self) -> int:
        return int(self.meta[K.M_EVICTED])

    @property
    def dropped(self) -> int:
        return int(self.meta[K.M_DROPPED])

    @property
    def missing_refs(self) -> int:
        """Cancel/delete/execute messages that referenced an absent order id."""
        return int(self.meta[K.M_MISSING])

    def copy(self) -> "OrderBook":
        new = OrderBook.__new__(OrderBook)
        new.orders = self.orders.copy()
        new.counts = self.counts.copy()
        new.meta = self.meta.copy()
        new.allow_self_trade = self.allow_self_trade
        new.protect_agent_orders = self.protect_agent_orders
        return new

    def __len__(self) -> int:
        return int(self.counts[0] + self.counts[1])

    # -- queries ---------------------------------------------------------
    def side_orders(self, side: Side) -> np.ndarray:
        """Live orders of one side, best priority first: rows of (price, qty, id, trader, seq)."""
        s = 0 if side == Side.BID else 1
        return self.orders[s, : self.counts[s]][::-1]

    def tops(self) -> tuple[int | None, int | None]:
        nb, na = self.counts
        bid = int(self.orders[0, nb - 1, K.O_PRICE]) if nb else None
        ask = int(self.orders[1, na - 1, K.O_PRICE]) if na else None
        return bid, ask

    def mid_half(self, fallback: int) -> int:
        """Mid price in half ticks; the one live side's best if the other is empty."""
        return int(K.mid_half(self.orders, self.counts, fallback))

    def l2(self, depth: int) -> L2Snapshot:
        if depth < 1:
            raise ValueError("depth must be >= 1")
        return L2Snapshot(
            K.l2_levels(self.orders, self.counts, 0, depth),
            K.l2_levels(self.orders, self.counts, 1, depth),
        )

    # -- mutation ----------------------------------------------------------
    def load_l2(self, snap: L2Snapshot, synthetic_id_base: int = SYNTH_ID_BASE) -> None:
        """Replace the contents with one synthetic order per snapshot level."""
        snap.validate()
        for name, lv in (("bids", snap.bids), ("asks", snap.asks)):
            if len(lv) > self.capacity:
                raise CapacityError(
                    f"snapshot has {len(lv)} {name} levels, book capacity is {self.capacity}")
        self.counts[:] = 0
        self.meta[:] = 0
        K.init_levels(self.orders, self.counts, self.meta, 0, snap.bids, synthetic_id_base)
        K.init_levels(self.orders, self.counts, self.meta, 1, snap.asks,
                      synthetic_id_base + len(snap.bids))

    def apply(self, msgs: np.ndarray, last_mid: int = 0) -> tuple[np.ndarray, int, int]:
        """Process an ``(n, 7)`` message array in order.

        Returns ``(trades, mid_sum, last_mid)``: the trade rows, the sum of the
        half-tick mid after each message and the final mid.
        """
        msgs = np.ascontiguousarray(msgs, dtype=np.int64)
        if msgs.ndim != 2 or msgs.shape[1] != MSG_WIDTH:
            raise ValueError(f"messages must have shape (n, {MSG_WIDTH})")
        buf = K.trade_buffer(len(msgs), self.capacity)
        nt, mid_sum, last_mid = K.process_batch(
            self.orders, self.counts, self.meta, msgs, buf, 0,
            self.allow_self_trade, self.protect_agent_orders, last_mid)
        return buf[:nt], int(mid_sum), int(last_mid)

    def process(self, msg: Message) -> list[TradeRecord]:
        trades, _, _ = self.apply(msg.to_row()[None, :])
        return trades_from_array(trades)


def new_book(capacity: int = DEFAULT_CAPACITY, **flags) -> OrderBook:
    return OrderBook(capacity, **flags)


def init_from_l2(book: OrderBook, snap: L2Snapshot,
                 synthetic_id_base: int = SYNTH_ID_BASE) -> OrderBook:
    out = book.copy()
    out.load_l2(snap, synthetic_id_base)
    return out


def process_message(book: OrderBook, msg: Message) -> tuple[OrderBook, list[TradeRecord]]:
    out = book.copy()
    return out, out.process(msg)


def book_tops(book: OrderBook) -> tuple[int | None, int | None]:
    return book.tops()


def mid_price(book: OrderBook, fallback: int) -> int:
    """Mid in half-tick units (``fallback`` is also in half ticks)."""
    return book.mid_half(fallback)


def l2_snapshot(book: OrderBook, depth: int) -> L2Snapshot:
    return book.l2(depth)
