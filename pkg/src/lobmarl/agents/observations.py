"""Observation builders.

Observations are float64 vectors with a fixed layout per preset; the
builders work on whole batches (``[E, n_agents, dim]``) from an
:class:`ObsContext` the environment fills after every step. Use
:func:`observation_layout` rather than hard-coding feature offsets.

Quantities are scaled by ``QTY_SCALE`` lots; prices are in ticks.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

QTY_SCALE = 100.0

_MM_BASIC = [
    "inventory", "cash", "spread", "mid_return", "imbalance", "time",
    "own_bid_live", "own_bid_offset", "own_ask_live", "own_ask_offset",
]
_EXEC_BASIC = [
    "task_remaining", "time", "direction", "spread", "mid_return", "mid_vs_arrival",
    "imbalance", "best_bid_qty", "best_ask_qty", "own_order_live", "own_order_offset",
]


def _levels(depth: int) -> list[str]:
    out = []
    for d in range(depth):
        out += [f"bid{d}_distance", f"bid{d}_qty", f"ask{d}_distance", f"ask{d}_qty"]
    return out


def observation_layout(space: str, depth: int = 5) -> list[str]:
    """Feature name for every index of the ``space`` observation vector."""
    if space == "mm_basic":
        return list(_MM_BASIC)
    if space == "mm_rich":
        return _MM_BASIC + ["bought_last_step", "sold_last_step"] + _levels(depth)
    if space == "exec_basic":
        return list(_EXEC_BASIC)
    if space == "exec_rich":
        return _EXEC_BASIC + ["executed_last_step"] + _levels(depth)
    raise ValueError(f"unknown observation space {space!r}")


def observation_dim(space: str, depth: int = 5) -> int:
    return len(observation_layout(space, depth))


class ObsContext(NamedTuple):
    """Batch view of everything observations are built from (leading axis = env).

    ``mid``/``prev_mid``/``p_init`` are in half ticks; ``l2`` is
    ``[E, 2, D, 2]`` with zero rows for missing levels; ``quotes`` is
    ``[E, A, 4]`` = (own best bid, own bid qty, own best ask, own ask qty)
    with -1 prices when the agent has no order on that side.
    """

    inventory: np.ndarray
    cash: np.ndarray
    task_remaining: np.ndarray
    direction: np.ndarray
    bought: np.ndarray
    sold: np.ndarray
    p_init: np.ndarray
    mid: np.ndarray
    prev_mid: np.ndarray
    last_bid: np.ndarray
    last_ask: np.ndarray
    l2: np.ndarray
    quotes: np.ndarray
    step: np.ndarray
    steps: int


def _book_features(ctx: ObsContext):
    bid_q = ctx.l2[:, 0, :, 1].sum(axis=1).astype(np.float64)
    ask_q = ctx.l2[:, 1, :, 1].sum(axis=1).astype(np.float64)
    tot = bid_q + ask_q
    imb = np.divide(bid_q - ask_q, tot, out=np.zeros_like(tot), where=tot > 0)
    spread = (ctx.last_ask - ctx.last_bid).astype(np.float64)
    ret = (ctx.mid - ctx.prev_mid) / 2.0
    time = ctx.step / float(ctx.steps)
    return spread, ret, imb, time


def _level_features(ctx: ObsContext) -> np.ndarray:
    mid = ctx.mid[:, None] / 2.0
    bp = ctx.l2[:, 0, :, 0].astype(np.float64)
    ap = ctx.l2[:, 1, :, 0].astype(np.float64)
    bq = ctx.l2[:, 0, :, 1] / QTY_SCALE
    aq = ctx.l2[:, 1, :, 1] / QTY_SCALE
    bd = np.where(bq > 0, mid - bp, 0.0)
    ad = np.where(aq > 0, ap - mid, 0.0)
    return np.stack([bd, bq, ad, aq], axis=-1).reshape(len(mid), -1)


def _own_offsets(ctx: ObsContext, cols):
    q = ctx.quotes[:, cols]
    bid_live = q[..., 0] >= 0
    ask_live = q[..., 2] >= 0
    bid_off = np.where(bid_live, ctx.last_bid[:, None] - q[..., 0], 0).astype(np.float64)
    ask_off = np.where(ask_live, q[..., 2] - ctx.last_ask[:, None], 0).astype(np.float64)
    return bid_live, bid_off, ask_live, ask_off


def _bcast(x, n):
    return np.broadcast_to(np.asarray(x, dtype=np.float64)[:, None], (len(x), n))


def build_mm_observations(ctx: ObsContext, cols, space: str, inventory_cap: float,
                          order_size: float) -> np.ndarray:
    n = len(cols)
    spread, ret, imb, time = _book_features(ctx)
    scale = inventory_cap * np.maximum(ctx.p_init / 2.0, 1.0)
    bid_live, bid_off, ask_live, ask_off = _own_offsets(ctx, cols)
    feats = [
        ctx.inventory[:, cols] / inventory_cap,
        ctx.cash[:, cols] / scale[:, None],
        _bcast(spread, n), _bcast(ret, n), _bcast(imb, n), _bcast(time, n),
        bid_live.astype(np.float64), bid_off, ask_live.astype(np.float64), ask_off,
    ]
    if space == "mm_rich":
        feats += [ctx.bought[:, cols] / order_size, ctx.sold[:, cols] / order_size]
    out = np.stack(feats, axis=-1)
    if space == "mm_rich":
        lv = _level_features(ctx)
        out = np.concatenate([out, np.broadcast_to(lv[:, None, :], (len(lv), n, lv.shape[1]))],
                             axis=-1)
    return np.ascontiguousarray(out)


def build_exec_observations(ctx: ObsContext, cols, space: str, task_size: float,
                            order_size: float) -> np.ndarray:
    n = len(cols)
    spread, ret, imb, time = _book_features(ctx)
    direction = ctx.direction[:, cols].astype(np.float64)
    drift = direction * ((ctx.mid - ctx.p_init) / 2.0)[:, None]
    frac = ctx.task_remaining[:, cols] / task_size if task_size > 0 else np.zeros((len(spread), n))
    bid_live, bid_off, ask_live, ask_off = _own_offsets(ctx, cols)
    buying = direction > 0
    live = np.where(buying, bid_live, ask_live)
    # distance behind the own-side touch (negative when inside the spread)
    off = np.where(buying, bid_off, ask_off)
    feats = [
        frac, _bcast(time, n), direction, _bcast(spread, n), _bcast(ret, n), drift,
        _bcast(imb, n), _bcast(ctx.l2[:, 0, 0, 1] / QTY_SCALE, n),
        _bcast(ctx.l2[:, 1, 0, 1] / QTY_SCALE, n), live.astype(np.float64), off,
    ]
    if space == "exec_rich":
        feats.append((ctx.bought[:, cols] + ctx.sold[:, cols]) / order_size)
    out = np.stack(feats, axis=-1)
    if space == "exec_rich":
        lv = _level_features(ctx)
        out = np.concatenate([out, np.broadcast_to(lv[:, None, :], (len(lv), n, lv.shape[1]))],
                             axis=-1)
    return np.ascontiguousarray(out)
