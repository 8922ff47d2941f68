"""Synthetic market-by-order streams around a random-walk fundamental price.

The generator drives the production book kernel while it emits messages, so
every delete, cancel and execution references an order that is live at that
moment and marketable orders are priced at the real opposite touch. Book
states are sampled from the same book every ``state_interval`` messages;
replaying from any sampled state therefore reproduces the generator's book.

Random draws come from ``numpy.random.default_rng(seed)`` up front; the
numba loop only consumes them.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..config import SynthConfig
from ..lob import kernel as K
from ..lob.types import MSG_WIDTH, SYNTH_ID_BASE, TR_WIDTH
from .store import MessageStore

# a side is topped up with a passive order when it falls below this many orders
MIN_LIVE = 3


@njit(cache=True)
def _geometric(u, log_q, cap):
    if log_q == 0.0:
        return 0
    lv = int(math.log(max(u, 1e-300)) / log_q)
    return min(lv, cap - 1)


@njit(cache=True)
def _generate(u, z, gaps, f0, vol, spread, depth_levels, p_level, init_levels, qmin, qmax,
              cum, max_live, start_time, snap_depth, interval, capacity, init_qty):
    n = u.shape[0]
    orders = np.zeros((2, capacity, K.O_WIDTH), dtype=np.int64)
    counts = np.zeros(2, dtype=np.int64)
    meta = np.zeros(K.M_WIDTH, dtype=np.int64)
    trades = np.empty((2 * capacity + 2, TR_WIDTH), dtype=np.int64)
    msgs = np.zeros((n, MSG_WIDTH), dtype=np.int64)
    n_states = (n + interval - 1) // interval
    sbids = np.zeros((n_states, snap_depth, 2), dtype=np.int64)
    sasks = np.zeros((n_states, snap_depth, 2), dtype=np.int64)
    log_q = math.log(1.0 - p_level) if p_level < 1.0 else 0.0

    f = f0
    anchor_bid = int(math.floor(f - spread / 2.0 + 0.5))
    bids0 = np.zeros((init_levels, 2), dtype=np.int64)
    asks0 = np.zeros((init_levels, 2), dtype=np.int64)
    for i in range(init_levels):
        bids0[i, 0] = anchor_bid - i
        bids0[i, 1] = init_qty[i, 0]
        asks0[i, 0] = anchor_bid + spread + i
        asks0[i, 1] = init_qty[i, 1]
    K.init_levels(orders, counts, meta, 0, bids0, SYNTH_ID_BASE)
    K.init_levels(orders, counts, meta, 1, asks0, SYNTH_ID_BASE + init_levels)

    t = start_time
    next_id = 1
    for i in range(n):
        if i % interval == 0:
            k = i // interval
            b = K.l2_levels(orders, counts, 0, snap_depth)
            a = K.l2_levels(orders, counts, 1, snap_depth)
            sbids[k, : b.shape[0]] = b
            sasks[k, : a.shape[0]] = a
        f += vol * z[i]
        if f < spread + depth_levels + 1.0:
            f = spread + depth_levels + 1.0
        anchor_bid = int(math.floor(f - spread / 2.0 + 0.5))
        anchor_ask = anchor_bid + spread
        t += gaps[i]
        r = u[i, 0]
        side = 1 if u[i, 1] < 0.5 else -1
        qty = qmin + int(u[i, 3] * (qmax - qmin + 1))
        if qty > qmax:
            qty = qmax

        kind = 0
        if i == 0:
            kind = 1
            side = 1
        elif counts[0] < MIN_LIVE or counts[1] < MIN_LIVE:
            kind = 1
            side = 1 if counts[0] <= counts[1] else -1
        elif r < cum[0]:
            kind = 1
        elif r < cum[1]:
            kind = 9  # marketable limit
        elif r < cum[2]:
            kind = 3
        elif r < cum[3]:
            kind = 2
        else:
            kind = 4

        s = 0 if side == 1 else 1
        if (kind == 1 or kind == 9) and counts[s] >= max_live:
            kind = 3

        msgs[i, 0] = t
        msgs[i, 2] = side
        if kind == 1 or kind == 9:
            o = 1 - s
            if kind == 9 and counts[o] > 0:
                price = orders[o, counts[o] - 1, K.O_PRICE]
            else:
                lv = 0 if i == 0 else _geometric(u[i, 2], log_q, depth_levels)
                if side == 1:
                    price = anchor_bid - lv
                    if counts[1] > 0 and price >= orders[1, counts[1] - 1, K.O_PRICE]:
                        price = orders[1, counts[1] - 1, K.O_PRICE] - 1
                else:
                    price = anchor_ask + lv
                    if counts[0] > 0 and price <= orders[0, counts[0] - 1, K.O_PRICE]:
                        price = orders[0, counts[0] - 1, K.O_PRICE] + 1
                if i == 0:
                    price = orders[0, counts[0] - 1, K.O_PRICE]
            if price < 1:
                price = 1
            msgs[i, 1] = 1
            msgs[i, 3] = price
            msgs[i, 4] = qty
            msgs[i, 5] = next_id
            next_id += 1
        else:
            # reference a live order of ``side``
            if kind == 4:
                j = counts[s] - 1
            else:
                j = int(u[i, 4] * counts[s])
                if j >= counts[s]:
                    j = counts[s] - 1
            live = orders[s, j, K.O_QTY]
            if kind == 2:
                if live <= 1:
                    kind = 3
                else:
                    qty = 1 + int(u[i, 3] * (live - 1))
                    if qty > live - 1:
                        qty = live - 1
            elif kind == 4:
                qty = 1 + int(u[i, 3] * live)
                if qty > live:
                    qty = live
            if kind == 3:
                qty = live
            msgs[i, 1] = kind
            msgs[i, 3] = orders[s, j, K.O_PRICE]
            msgs[i, 4] = qty
            msgs[i, 5] = orders[s, j, K.O_OID]
        K.process_one(orders, counts, meta, msgs[i], trades, 0, True, False)
    return msgs, sbids, sasks, meta


def synth_generate(config: SynthConfig | None = None, seed: int = 0) -> MessageStore:
    """Deterministic synthetic :class:`MessageStore` for ``seed``."""
    cfg = config or SynthConfig()
    rng = np.random.default_rng(seed)
    n = cfg.n_messages
    u = rng.random((n, 5))
    z = rng.standard_normal(n)
    gaps = np.floor(rng.exponential(1.0, n) * cfg.mean_interarrival_ns).astype(np.int64)
    init_qty = rng.integers(cfg.qty_min, cfg.qty_max + 1, size=(cfg.initial_levels, 2))
    p = (cfg.p_limit, cfg.p_marketable, cfg.p_delete, cfg.p_cancel)
    cum = np.cumsum(np.array(p, dtype=np.float64))
    msgs, sbids, sasks, meta = _generate(
        u, z, gaps, float(cfg.initial_mid), float(cfg.volatility), cfg.spread_ticks,
        cfg.depth_levels, float(cfg.level_decay), cfg.initial_levels, cfg.qty_min, cfg.qty_max,
        cum, cfg.max_live, cfg.start_time_ns, cfg.snapshot_depth, cfg.state_interval,
        cfg.capacity, init_qty.astype(np.int64))
    if meta[K.M_MISSING] or meta[K.M_EVICTED] or meta[K.M_DROPPED]:
        raise RuntimeError("synthetic stream is not self-consistent")  # generator bug guard
    offsets = np.arange(0, n, cfg.state_interval, dtype=np.int64)
    return MessageStore(msgs, offsets, sbids, sasks, tick_size=0.01,
                        state_interval=cfg.state_interval)
