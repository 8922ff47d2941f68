"""Naive reference matcher used as a test oracle.

Orders are kept in one unbounded arrival-ordered list; every event rescans
the whole list for the best price-time candidate or the referenced id. It
shares nothing with the production kernel except the message/trade column
layout, and is compiled with numba only so that large randomized
comparisons stay affordable (``.py_func`` runs it as plain Python).
"""
import numpy as np
from numba import njit

from .types import TR_WIDTH, L2Snapshot

# entry columns
_SIDE, _PRICE, _QTY, _OID, _TID, _SEQ = range(6)


@njit(cache=True)
def _grow(entries, n):
    if n < entries.shape[0]:
        return entries
    bigger = np.zeros((entries.shape[0] * 2, 6), dtype=np.int64)
    bigger[:n] = entries[:n]
    return bigger


@njit(cache=True)
def _compact(entries, n):
    k = 0
    for i in range(n):
        if entries[i, _QTY] > 0:
            entries[k] = entries[i]
            k += 1
    return k


@njit(cache=True)
def reference_replay(init_entries, msgs):
    """Replay ``msgs`` starting from ``init_entries`` (rows side, price, qty, oid, tid, seq).

    Returns (trades, live entries in arrival order).
    """
    entries = np.zeros((max(64, 2 * init_entries.shape[0]), 6), dtype=np.int64)
    n = init_entries.shape[0]
    entries[:n] = init_entries
    next_seq = 0
    for i in range(n):
        if entries[i, _SEQ] >= next_seq:
            next_seq = entries[i, _SEQ] + 1
    dead = 0
    trades = np.zeros((64, TR_WIDTH), dtype=np.int64)
    nt = 0
    for m in range(msgs.shape[0]):
        time, kind, side, price, qty, oid, tid = msgs[m]
        if kind == 1:
            if qty <= 0:
                continue
            seq = next_seq
            next_seq += 1
            while qty > 0:
                best = -1
                for i in range(n):
                    if entries[i, _QTY] <= 0 or entries[i, _SIDE] == side:
                        continue
                    p = entries[i, _PRICE]
                    crosses = p <= price if side == 1 else p >= price
                    if not crosses:
                        continue
                    if best < 0:
                        best = i
                        continue
                    bp = entries[best, _PRICE]
                    better = p < bp if side == 1 else p > bp
                    if better or (p == bp and entries[i, _SEQ] < entries[best, _SEQ]):
                        best = i
                if best < 0:
                    break
                fill = min(qty, entries[best, _QTY])
                if nt == trades.shape[0]:
                    bigger = np.zeros((2 * nt, TR_WIDTH), dtype=np.int64)
                    bigger[:nt] = trades
                    trades = bigger
                trades[nt, 0] = entries[best, _PRICE]
                trades[nt, 1] = fill
                trades[nt, 2] = side
                trades[nt, 3] = entries[best, _TID]
                trades[nt, 4] = tid
                trades[nt, 5] = time
                trades[nt, 6] = entries[best, _OID]
                trades[nt, 7] = oid
                trades[nt, 8] = entries[best, _SEQ]
                nt += 1
                entries[best, _QTY] -= fill
                if entries[best, _QTY] == 0:
                    dead += 1
                qty -= fill
            if qty > 0:
                entries = _grow(entries, n)
                entries[n, _SIDE] = side
                entries[n, _PRICE] = price
                entries[n, _QTY] = qty
                entries[n, _OID] = oid
                entries[n, _TID] = tid
                entries[n, _SEQ] = seq
                n += 1
        elif kind == 2 or kind == 3 or kind == 4:
            for i in range(n):
                if entries[i, _QTY] > 0 and entries[i, _SIDE] == side and entries[i, _OID] == oid:
                    if kind == 3:
                        entries[i, _QTY] = 0
                    else:
                        entries[i, _QTY] = max(0, entries[i, _QTY] - qty)
                    if entries[i, _QTY] == 0:
                        dead += 1
                    break
        if dead > 16 + (n - dead):
            n = _compact(entries, n)
            dead = 0
    n = _compact(entries, n)
    return trades[:nt].copy(), entries[:n].copy()


def entries_from_l2(snap: L2Snapshot, synthetic_id_base: int) -> np.ndarray:
    """Synthetic initial orders matching the production book's L2 initialisation."""
    rows = []
    seq = 0
    oid = synthetic_id_base
    for side, levels in ((1, snap.bids), (-1, snap.asks)):
        for price, qty in levels:
            rows.append((side, price, qty, oid, 0, seq))
            seq += 1
            oid += 1
    if not rows:
        return np.zeros((0, 6), dtype=np.int64)
    return np.array(rows, dtype=np.int64)


def entries_l2(entries: np.ndarray, depth: int | None = None) -> L2Snapshot:
    """Aggregate live reference entries into an L2 snapshot (all levels by default)."""
    out = []
    for side, reverse in ((1, True), (-1, False)):
        agg: dict[int, int] = {}
        for row in entries:
            if row[_SIDE] == side and row[_QTY] > 0:
                agg[int(row[_PRICE])] = agg.get(int(row[_PRICE]), 0) + int(row[_QTY])
        levels = sorted(agg.items(), reverse=reverse)
        if depth is not None:
            levels = levels[:depth]
        out.append(levels)
    return L2Snapshot(out[0], out[1])
