"""LOBSTER message / orderbook file reader and writer.

Message file columns: time (seconds after midnight, up to ns precision),
event type 1-7, order id, size, price (dollars x 1e4), direction (+1 buy,
-1 sell). Orderbook file: one row per message holding D levels of
(ask price, ask size, bid price, bid size) after that message; empty
levels carry the dummy prices below. Neither file has a header.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..lob.book import DEFAULT_CAPACITY, OrderBook
from ..lob.types import (
    MSG_KIND, MSG_OID, MSG_PRICE, MSG_QTY, MSG_SIDE, MSG_TIME, MSG_WIDTH, SYNTH_ID_BASE,
    Kind, L2Snapshot,
)
from .store import MessageStore

PRICE_SCALE = 10_000
DUMMY_ASK = 9_999_999_999
DUMMY_BID = -9_999_999_999
NS = 1_000_000_000


class LobsterFormatError(ValueError):
    pass


def _tick_unit(tick_size: float) -> int:
    unit = round(tick_size * PRICE_SCALE)
    if unit < 1 or abs(unit - tick_size * PRICE_SCALE) > 1e-9:
        raise ValueError(f"tick size {tick_size} is not a multiple of 1e-4 dollars")
    return unit


def parse_time_ns(text: str) -> int:
    """Seconds-after-midnight string to integer nanoseconds (truncating past 1 ns)."""
    text = text.strip()
    whole, _, frac = text.partition(".")
    if not whole.isdigit() or (frac and not frac.isdigit()):
        raise ValueError(f"bad time {text!r}")
    return int(whole) * NS + int((frac + "000000000")[:9])


def format_time_ns(t: int) -> str:
    return f"{t // NS}.{t % NS:09d}"


def _to_ticks(price: int, unit: int, strict: bool) -> int:
    if price % unit == 0:
        return price // unit
    if strict:
        raise ValueError(f"price {price} is not a multiple of the tick ({unit})")
    return price // unit


def _parse_message_row(row: list[str], unit: int) -> list[int]:
    if len(row) < 6:
        raise ValueError(f"expected 6 columns, got {len(row)}")
    kind = int(row[1])
    if not 1 <= kind <= 7:
        raise ValueError(f"unknown event type {kind}")
    qty = int(row[3])
    if qty < 0:
        raise ValueError("negative size")
    direction = int(row[5])
    if direction not in (1, -1):
        raise ValueError(f"bad direction {direction}")
    # hidden executions, crosses and halts carry free-form prices (halts use -1)
    price = _to_ticks(int(row[4]), unit, strict=kind <= 4)
    if kind == Kind.NEW_LIMIT and price <= 0:
        raise ValueError("non-positive limit price")
    return [parse_time_ns(row[0]), kind, direction, price, qty, int(row[2]), 0]


def _parse_book_row(row: list[str], unit: int) -> L2Snapshot:
    if len(row) % 4 or not row:
        raise ValueError(f"orderbook row has {len(row)} columns, not a multiple of 4")
    vals = [int(v) for v in row]
    asks, bids = [], []
    for lv in range(len(vals) // 4):
        ap, asz, bp, bsz = vals[4 * lv: 4 * lv + 4]
        if asz > 0 and 0 < ap < DUMMY_ASK:
            asks.append((_to_ticks(ap, unit, True), asz))
        if bsz > 0 and bp > 0:
            bids.append((_to_ticks(bp, unit, True), bsz))
    return L2Snapshot(bids, asks)


def _add_level(levels: list, price: int, qty: int, best_first_desc: bool, depth: int) -> list:
    out = dict(levels)
    out[price] = out.get(price, 0) + qty
    return sorted(((p, q) for p, q in out.items() if q > 0), reverse=best_first_desc)[:depth]


def undo_message(snap: L2Snapshot, msg: np.ndarray, depth: int) -> L2Snapshot:
    """Best-effort L2 state before ``msg`` given the state after it.

    Exact when the message added to, or removed from, a level that stays
    inside the visible depth; a level pushed beyond the depth cannot be
    recovered.
    """
    kind, side, price, qty = (int(msg[MSG_KIND]), int(msg[MSG_SIDE]), int(msg[MSG_PRICE]),
                              int(msg[MSG_QTY]))
    if kind not in (1, 2, 3, 4):
        return snap
    sign = -1 if kind == Kind.NEW_LIMIT else 1
    bids = [tuple(map(int, r)) for r in snap.bids]
    asks = [tuple(map(int, r)) for r in snap.asks]
    if side == 1:
        bids = _add_level(bids, price, sign * qty, True, depth)
    else:
        asks = _add_level(asks, price, sign * qty, False, depth)
    return L2Snapshot(bids, asks)


def load_lobster(message_path, orderbook_path, tick_size: float = 0.01,
                 state_interval: int = 100) -> MessageStore:
    """Read a LOBSTER file pair into a :class:`MessageStore`.

    Book states are sampled every ``state_interval`` messages; the state at
    offset ``k`` is orderbook row ``k - 1`` (for ``k = 0``, row 0 with the
    first message undone).
    """
    unit = _tick_unit(tick_size)
    rows = []
    with open(message_path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append(_parse_message_row(row, unit))
            except ValueError as exc:
                raise LobsterFormatError(f"{message_path}: row {n}: {exc}") from None
            if len(rows) > 1 and rows[-1][MSG_TIME] < rows[-2][MSG_TIME]:
                raise LobsterFormatError(f"{message_path}: row {n}: time goes backwards")
    msgs = np.array(rows, dtype=np.int64).reshape(-1, MSG_WIDTH)

    wanted = {k - 1 for k in range(state_interval, len(msgs), state_interval)}
    wanted.add(0)
    snaps: dict[int, L2Snapshot] = {}
    depth = 0
    n_book = 0
    with open(orderbook_path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            n_book += 1
            depth = max(depth, len(row) // 4)
            if n_book - 1 in wanted:
                try:
                    snaps[n_book - 1] = _parse_book_row(row, unit)
                except ValueError as exc:
                    raise LobsterFormatError(f"{orderbook_path}: row {n}: {exc}") from None
    if n_book != len(msgs):
        raise LobsterFormatError(
            f"row count mismatch: {len(msgs)} messages vs {n_book} orderbook rows")
    states = {}
    if len(msgs):
        states[0] = undo_message(snaps[0], msgs[0], depth)
    for k in range(state_interval, len(msgs), state_interval):
        states[k] = snaps[k - 1]
    return MessageStore.from_states(msgs, states, max(depth, 1), tick_size, state_interval)


def _book_row(snap: L2Snapshot, depth: int, unit: int) -> list[int]:
    out = []
    for lv in range(depth):
        if lv < len(snap.asks):
            out += [int(snap.asks[lv, 0]) * unit, int(snap.asks[lv, 1])]
        else:
            out += [DUMMY_ASK, 0]
        if lv < len(snap.bids):
            out += [int(snap.bids[lv, 0]) * unit, int(snap.bids[lv, 1])]
        else:
            out += [DUMMY_BID, 0]
    return out


def write_lobster(store: MessageStore, message_path, orderbook_path,
                  capacity: int = DEFAULT_CAPACITY) -> None:
    """Write ``store`` as a LOBSTER file pair.

    Orderbook rows are regenerated by replaying the messages from the store's
    first book state, so the book states must be consistent with that replay.
    """
    unit = _tick_unit(store.tick_size)
    depth = store.depth
    book = OrderBook(capacity)
    if len(store):
        book.load_l2(store.book_state(0), SYNTH_ID_BASE)
    Path(message_path).parent.mkdir(parents=True, exist_ok=True)
    Path(orderbook_path).parent.mkdir(parents=True, exist_ok=True)
    with open(message_path, "w", newline="") as mf, open(orderbook_path, "w", newline="") as bf:
        mw = csv.writer(mf, lineterminator="\n")
        bw = csv.writer(bf, lineterminator="\n")
        for msg in store.messages:
            book.apply(msg[None, :])
            mw.writerow([format_time_ns(int(msg[MSG_TIME])), int(msg[MSG_KIND]),
                         int(msg[MSG_OID]), int(msg[MSG_QTY]), int(msg[MSG_PRICE]) * unit,
                         int(msg[MSG_SIDE])])
            bw.writerow(_book_row(book.l2(depth), depth, unit))
