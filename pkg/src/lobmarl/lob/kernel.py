"""Numba kernels for the fixed-capacity price-time priority book.

Layout: ``orders[side, slot, field]`` with side 0 = bids, 1 = asks and the
``O_*`` fields below. Each side holds ``counts[side]`` live orders sorted
worst-priority first, so the best order is always ``counts[side] - 1``:
matching pops from the end and the common near-touch insert shifts few rows.
Within a price level, newer orders sort before older ones.

``meta`` holds engine counters (``M_*``).
"""
import numpy as np
from numba import njit

from .types import (
    MSG_KIND, MSG_OID, MSG_PRICE, MSG_QTY, MSG_SIDE, MSG_TID, MSG_TIME, TR_WIDTH,
)

O_PRICE = 0
O_QTY = 1
O_OID = 2
O_TID = 3
O_SEQ = 4
O_WIDTH = 5

M_NEXT_SEQ = 0
M_EVICTED = 1
M_DROPPED = 2
M_MISSING = 3
M_WIDTH = 4

K_NEW = 1
K_CANCEL = 2
K_DELETE = 3
K_EXEC = 4


@njit(cache=True, inline="always")
def _side_index(side):
    return 0 if side == 1 else 1


@njit(cache=True, inline="always")
def _key(s, price):
    return price if s == 0 else -price


@njit(cache=True)
def _copy_row(orders, s, dst, src):
    for f in range(O_WIDTH):
        orders[s, dst, f] = orders[s, src, f]


@njit(cache=True)
def _remove_at(orders, counts, s, i):
    n = counts[s]
    for j in range(i, n - 1):
        _copy_row(orders, s, j, j + 1)
    counts[s] = n - 1


@njit(cache=True)
def _insert(orders, counts, s, price, qty, oid, tid, seq):
    n = counts[s]
    k = _key(s, price)
    lo = 0
    hi = n
    while lo < hi:
        mid = (lo + hi) >> 1
        if _key(s, orders[s, mid, O_PRICE]) < k:
            lo = mid + 1
        else:
            hi = mid
    for j in range(n, lo, -1):
        _copy_row(orders, s, j, j - 1)
    orders[s, lo, O_PRICE] = price
    orders[s, lo, O_QTY] = qty
    orders[s, lo, O_OID] = oid
    orders[s, lo, O_TID] = tid
    orders[s, lo, O_SEQ] = seq
    counts[s] = n + 1


@njit(cache=True)
def _find(orders, counts, s, oid):
    for i in range(counts[s] - 1, -1, -1):
        if orders[s, i, O_OID] == oid:
            return i
    return -1


@njit(cache=True)
def _eviction_slot(orders, counts, s, protect_agents):
    """Slot of the worst-priced order (oldest among equal price), or -1."""
    n = counts[s]
    first = -1
    for i in range(n):
        if not protect_agents or orders[s, i, O_TID] == 0:
            first = i
            break
    if first < 0:
        return -1
    wp = orders[s, first, O_PRICE]
    slot = first
    j = first + 1
    while j < n and orders[s, j, O_PRICE] == wp:
        if not protect_agents or orders[s, j, O_TID] == 0:
            slot = j
        j += 1
    return slot


@njit(cache=True)
def _rest(orders, counts, meta, s, price, qty, oid, tid, seq, protect_agents):
    cap = orders.shape[1]
    if counts[s] >= cap:
        slot = _eviction_slot(orders, counts, s, protect_agents)
        if slot < 0 or _key(s, price) <= _key(s, orders[s, slot, O_PRICE]):
            meta[M_DROPPED] += 1
            return
        _remove_at(orders, counts, s, slot)
        meta[M_EVICTED] += 1
    _insert(orders, counts, s, price, qty, oid, tid, seq)


@njit(cache=True)
def _new_limit(orders, counts, meta, side, price, qty, oid, tid, time,
               trades, nt, allow_self_trade, protect_agents):
    s = _side_index(side)
    o = 1 - s
    seq = meta[M_NEXT_SEQ]
    meta[M_NEXT_SEQ] = seq + 1
    while qty > 0 and counts[o] > 0:
        b = counts[o] - 1
        bp = orders[o, b, O_PRICE]
        if s == 0:
            if bp > price:
                break
        elif bp < price:
            break
        btid = orders[o, b, O_TID]
        if not allow_self_trade and tid > 0 and btid == tid:
            counts[o] = b
            continue
        bq = orders[o, b, O_QTY]
        fill = qty if qty < bq else bq
        trades[nt, 0] = bp
        trades[nt, 1] = fill
        trades[nt, 2] = side
        trades[nt, 3] = btid
        trades[nt, 4] = tid
        trades[nt, 5] = time
        trades[nt, 6] = orders[o, b, O_OID]
        trades[nt, 7] = oid
        trades[nt, 8] = orders[o, b, O_SEQ]
        nt += 1
        qty -= fill
        if fill == bq:
            counts[o] = b
        else:
            orders[o, b, O_QTY] = bq - fill
    if qty > 0:
        _rest(orders, counts, meta, s, price, qty, oid, tid, seq, protect_agents)
    return nt


@njit(cache=True)
def process_one(orders, counts, meta, msg, trades, nt, allow_self_trade, protect_agents):
    kind = msg[MSG_KIND]
    if kind == K_NEW:
        if msg[MSG_QTY] <= 0:
            return nt
        return _new_limit(orders, counts, meta, msg[MSG_SIDE], msg[MSG_PRICE], msg[MSG_QTY],
                          msg[MSG_OID], msg[MSG_TID], msg[MSG_TIME], trades, nt,
                          allow_self_trade, protect_agents)
    if kind == K_CANCEL or kind == K_DELETE or kind == K_EXEC:
        s = _side_index(msg[MSG_SIDE])
        i = _find(orders, counts, s, msg[MSG_OID])
        if i < 0:
            meta[M_MISSING] += 1
            return nt
        if kind == K_DELETE:
            _remove_at(orders, counts, s, i)
        else:
            left = orders[s, i, O_QTY] - msg[MSG_QTY]
            if left > 0:
                orders[s, i, O_QTY] = left
            else:
                _remove_at(orders, counts, s, i)
    return nt


@njit(cache=True, inline="always")
def mid_half(orders, counts, fallback):
    nb = counts[0]
    na = counts[1]
    if nb > 0 and na > 0:
        return orders[0, nb - 1, O_PRICE] + orders[1, na - 1, O_PRICE]
    if nb > 0:
        return 2 * orders[0, nb - 1, O_PRICE]
    if na > 0:
        return 2 * orders[1, na - 1, O_PRICE]
    return fallback


@njit(cache=True)
def process_batch(orders, counts, meta, msgs, trades, nt, allow_self_trade, protect_agents,
                  last_mid):
    """Run ``msgs`` in order; returns (n_trades, sum of mids after each message, last mid).

    Mids are in half ticks and fall back to the previous valid mid.
    """
    mid_sum = 0
    for i in range(msgs.shape[0]):
        nt = process_one(orders, counts, meta, msgs[i], trades, nt, allow_self_trade,
                         protect_agents)
        last_mid = mid_half(orders, counts, last_mid)
        mid_sum += last_mid
    return nt, mid_sum, last_mid


@njit(cache=True)
def l2_levels(orders, counts, s, depth):
    out = np.zeros((depth, 2), dtype=np.int64)
    k = -1
    for i in range(counts[s] - 1, -1, -1):
        p = orders[s, i, O_PRICE]
        if k >= 0 and out[k, 0] == p:
            out[k, 1] += orders[s, i, O_QTY]
        else:
            if k + 1 == depth:
                break
            k += 1
            out[k, 0] = p
            out[k, 1] = orders[s, i, O_QTY]
    return out[: k + 1]


@njit(cache=True)
def init_levels(orders, counts, meta, s, levels, id_base):
    for i in range(levels.shape[0]):
        seq = meta[M_NEXT_SEQ]
        meta[M_NEXT_SEQ] = seq + 1
        _insert(orders, counts, s, levels[i, 0], levels[i, 1], id_base + i, 0, seq)


def trade_buffer(n_messages: int, capacity: int) -> np.ndarray:
    # every trade but the last one of a message fully consumes a resting order
    return np.empty((2 * n_messages + 2 * capacity + 1, TR_WIDTH), dtype=np.int64)
