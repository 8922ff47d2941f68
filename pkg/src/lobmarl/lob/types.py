"""Core value types of the order book: messages, trades and L2 snapshots.

Messages travel through the engine as rows of an ``int64`` array with the
column layout given by ``MSG_*``; :class:`Message` is the convenience view
of a single row. Trades are emitted the same way (``TR_*`` columns).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np


class Side(IntEnum):
    """Order side, encoded like the LOBSTER direction column."""

    BID = 1
    ASK = -1

    @property
    def opposite(self) -> "Side":
        return Side(-int(self))


class Kind(IntEnum):
    """Message kinds, numbered like LOBSTER event types."""

    NEW_LIMIT = 1
    CANCEL_PARTIAL = 2
    DELETE = 3
    EXECUTE_VISIBLE = 4
    EXECUTE_HIDDEN = 5
    CROSS = 6
    HALT = 7


# message columns
MSG_TIME = 0
MSG_KIND = 1
MSG_SIDE = 2
MSG_PRICE = 3
MSG_QTY = 4
MSG_OID = 5
MSG_TID = 6
MSG_WIDTH = 7

# trade columns
TR_PRICE = 0
TR_QTY = 1
TR_AGGR_SIDE = 2
TR_PASSIVE_TID = 3
TR_AGGR_TID = 4
TR_TIME = 5
TR_PASSIVE_OID = 6
TR_AGGR_OID = 7
TR_PASSIVE_SEQ = 8
TR_WIDTH = 9

# Order-id ranges. Replay ids live below SYNTH_ID_BASE.
SYNTH_ID_BASE = 1 << 50
AGENT_ID_BASE = 1 << 52
AGENT_ID_STRIDE = 1 << 32


class Message(NamedTuple):
    time: int
    kind: Kind
    side: Side
    price: int
    quantity: int
    order_id: int
    trader_id: int = 0

    def to_row(self) -> np.ndarray:
        return np.array(
            [self.time, int(self.kind), int(self.side), self.price,
             self.quantity, self.order_id, self.trader_id],
            dtype=np.int64,
        )

    @classmethod
    def from_row(cls, row) -> "Message":
        return cls(
            int(row[MSG_TIME]), Kind(int(row[MSG_KIND])), Side(int(row[MSG_SIDE])),
            int(row[MSG_PRICE]), int(row[MSG_QTY]), int(row[MSG_OID]), int(row[MSG_TID]),
        )


def messages_to_array(messages) -> np.ndarray:
    """Stack an iterable of :class:`Message` into an ``(n, 7)`` int64 array."""
    rows = [m.to_row() for m in messages]
    if not rows:
        return np.zeros((0, MSG_WIDTH), dtype=np.int64)
    return np.stack(rows)


class TradeRecord(NamedTuple):
    price: int
    quantity: int
    aggressor_side: Side
    passive_trader_id: int
    aggressor_trader_id: int
    time: int
    passive_order_id: int
    aggressor_order_id: int
    passive_seq: int

    @classmethod
    def from_row(cls, row) -> "TradeRecord":
        return cls(
            int(row[TR_PRICE]), int(row[TR_QTY]), Side(int(row[TR_AGGR_SIDE])),
            int(row[TR_PASSIVE_TID]), int(row[TR_AGGR_TID]), int(row[TR_TIME]),
            int(row[TR_PASSIVE_OID]), int(row[TR_AGGR_OID]), int(row[TR_PASSIVE_SEQ]),
        )


def trades_from_array(arr: np.ndarray) -> list[TradeRecord]:
    return [TradeRecord.from_row(r) for r in arr]


def _levels(levels) -> np.ndarray:
    arr = np.asarray(levels, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return arr.reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class L2Snapshot:
    """Aggregated top-of-book levels, best level first on each side.

    ``bids`` and ``asks`` are ``(k, 2)`` int64 arrays of (price ticks, quantity).
    """

    bids: np.ndarray
    asks: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bids", _levels(self.bids))
        object.__setattr__(self, "asks", _levels(self.asks))

    @classmethod
    def empty(cls) -> "L2Snapshot":
        return cls(np.zeros((0, 2), np.int64), np.zeros((0, 2), np.int64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, L2Snapshot):
            return NotImplemented
        return np.array_equal(self.bids, other.bids) and np.array_equal(self.asks, other.asks)

    def __repr__(self) -> str:
        return f"L2Snapshot(bids={self.bids.tolist()}, asks={self.asks.tolist()})"

    def validate(self) -> None:
        for name, lv, sign in (("bids", self.bids, -1), ("asks", self.asks, 1)):
            if len(lv) and np.any(lv[:, 1] <= 0):
                raise ValueError(f"{name}: zero-quantity level")
            if len(lv) and np.any(lv[:, 0] <= 0):
                raise ValueError(f"{name}: non-positive price")
            if len(lv) > 1 and np.any(sign * np.diff(lv[:, 0]) <= 0):
                raise ValueError(f"{name}: prices not strictly ordered best-first")
