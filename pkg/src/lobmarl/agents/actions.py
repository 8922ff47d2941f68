"""Discrete action decoders.

Each decoder maps an action id plus the current book tops to at most two
orders ``(side, price, quantity)``. The numba versions write into a ``(2, 3)``
output array and are called from the environment kernel; the Python
functions below wrap them for direct use and validate ids.

Book tops use ``NO_PRICE`` (-1) for an empty side. Mids are in half ticks.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..config import DEFAULT_FIXED_QUANT, AgentParams, AvStParams
from ..lob.types import Side

NO_PRICE = -1
NO_QUOTE = -(1 << 62)  # FixedQuant table entry meaning "no order on this side"

FIXED_QUANT = 0
SPREAD_SKEW = 1
AVST = 2
EXEC_SIMPLE = 3
EXEC_COMPLEX = 4
DIRECTIONAL = 5

SPACE_CODES = {
    "fixed_quant": FIXED_QUANT, "spread_skew": SPREAD_SKEW, "avst": AVST,
    "exec_simple": EXEC_SIMPLE, "exec_complex": EXEC_COMPLEX, "directional": DIRECTIONAL,
}

# executor reference prices, in action-id order
FAR_TOUCH, NEAR_TOUCH, NEAR_PASSIVE, MID_PASSIVE = range(4)
N_EXEC_PRICES = 4


def action_arity(space: str, params: AgentParams | None = None) -> int:
    p = params or AgentParams()
    if space == "fixed_quant":
        return len(p.fixed_quant_table)
    if space == "spread_skew":
        return len(p.spread_skew_table)
    if space == "avst":
        return len(p.avst.gamma_grid)
    if space == "exec_simple":
        return N_EXEC_PRICES
    if space == "exec_complex":
        return N_EXEC_PRICES * len(p.exec_multipliers)
    if space == "directional":
        return 3
    raise ValueError(f"unknown action space {space!r}")


# -- numba kernels --------------------------------------------------------------
@njit(cache=True, inline="always")
def _put(out, n, side, price, qty):
    out[n, 0] = side
    out[n, 1] = price if price > 1 else 1
    out[n, 2] = qty
    return n + 1


@njit(cache=True)
def mm_tops(bid, ask, mid_half, half_spread):
    """Tops to quote around: the live tops, or last mid +- half spread if a side is empty."""
    if bid != NO_PRICE and ask != NO_PRICE:
        return bid, ask
    mid = mid_half / 2.0
    return int(math.floor(mid - half_spread)), int(math.ceil(mid + half_spread))


@njit(cache=True)
def decode_fixed_quant_nb(aid, bid, ask, size, table, out):
    ob = table[aid, 0]
    oa = table[aid, 1]
    n = 0
    pb = 0
    pa = 0
    if ob != NO_QUOTE:
        pb = bid - ob
        if pb > ask - 1:
            pb = ask - 1
    if oa != NO_QUOTE:
        pa = ask + oa
        if pa < bid + 1:
            pa = bid + 1
    if ob != NO_QUOTE and oa != NO_QUOTE and pb >= pa:
        pa = pb + 1
    if ob != NO_QUOTE:
        n = _put(out, n, 1, pb, size)
    if oa != NO_QUOTE:
        n = _put(out, n, -1, pa, size)
    return n


@njit(cache=True)
def decode_spread_skew_nb(aid, mid_half, size, table, out):
    mid = mid_half / 2.0
    s = table[aid, 0]
    k = table[aid, 1]
    pb = int(math.floor(mid - s + k))
    pa = int(math.ceil(mid + s + k))
    if pb < 1:
        pb = 1
    if pb >= pa:
        pa = pb + 1
    n = _put(out, 0, 1, pb, size)
    return _put(out, n, -1, pa, size)


@njit(cache=True)
def avst_quotes(mid, inventory, gamma, sigma, kappa, time_left):
    """Reservation price and half spread of the inventory-aware quoting model."""
    r = mid - inventory * gamma * sigma * sigma * time_left
    delta = 0.5 * (gamma * sigma * sigma * time_left + (2.0 / gamma) * math.log(1.0 + gamma / kappa))
    return r, delta


@njit(cache=True)
def decode_avst_nb(gamma, mid_half, inventory_units, sigma, kappa, time_left, size, out):
    r, delta = avst_quotes(mid_half / 2.0, inventory_units, gamma, sigma, kappa, time_left)
    pb = int(math.floor(r - delta))
    pa = int(math.ceil(r + delta))
    if pb < 1:
        pb = 1
    if pb >= pa:
        pa = pb + 1
    n = _put(out, 0, 1, pb, size)
    return _put(out, n, -1, pa, size)


@njit(cache=True)
def decode_directional_nb(aid, bid, ask, size, out):
    if aid == 1:
        return _put(out, 0, 1, bid, size)
    if aid == 2:
        return _put(out, 0, -1, ask, size)
    return 0


@njit(cache=True)
def exec_price(price_idx, direction, bid, ask, mid_half, last_bid, last_ask):
    """Limit price of reference ``price_idx`` for a buyer (+1) or seller (-1)."""
    if direction == 1:
        far = ask if ask != NO_PRICE else last_ask + 1
        near = bid if bid != NO_PRICE else last_bid
    else:
        far = bid if bid != NO_PRICE else last_bid - 1
        near = ask if ask != NO_PRICE else last_ask
    if price_idx == FAR_TOUCH:
        return far
    if price_idx == NEAR_TOUCH:
        return near
    if price_idx == NEAR_PASSIVE:
        return near - direction
    # mid-side passive: the mid rounded away from the far side, never crossing
    if direction == 1:
        p = mid_half // 2
        return p if p <= far - 1 else far - 1
    p = (mid_half + 1) // 2
    return p if p >= far + 1 else far + 1


@njit(cache=True)
def decode_exec_nb(aid, complex_, direction, bid, ask, mid_half, last_bid, last_ask,
                   size, multipliers, remaining, out):
    if complex_:
        nm = multipliers.shape[0]
        price_idx = aid // nm
        qty = size * multipliers[aid % nm]
    else:
        price_idx = aid
        qty = size
    if qty > remaining:
        qty = remaining
    if qty <= 0:
        return 0
    price = exec_price(price_idx, direction, bid, ask, mid_half, last_bid, last_ask)
    return _put(out, 0, direction, price, qty)


# -- python wrappers ------------------------------------------------------------
def _check(action_id: int, arity: int) -> int:
    if not 0 <= int(action_id) < arity:
        raise ValueError(f"action id {action_id} out of range [0, {arity})")
    return int(action_id)


def _orders(out: np.ndarray, n: int) -> list[tuple[Side, int, int]]:
    return [(Side(int(out[i, 0])), int(out[i, 1]), int(out[i, 2])) for i in range(n)]


def _tops(book_tops) -> tuple[int, int]:
    bid, ask = book_tops
    return (NO_PRICE if bid is None else int(bid)), (NO_PRICE if ask is None else int(ask))


def fixed_quant_table(rows=DEFAULT_FIXED_QUANT) -> np.ndarray:
    return np.array([[NO_QUOTE if v is None else v for v in r] for r in rows], dtype=np.int64)


def decode_fixed_quant(action_id: int, book_tops, order_size: int, *,
                       table=DEFAULT_FIXED_QUANT, last_mid_half: int = 0,
                       half_spread: float = 1.0) -> list[tuple[Side, int, int]]:
    """Quote from a row of (bid offset, ask offset) ticks away from the own-side best."""
    tab = fixed_quant_table(table)
    aid = _check(action_id, len(tab))
    bid, ask = mm_tops(*_tops(book_tops), last_mid_half, half_spread)
    out = np.zeros((2, 3), dtype=np.int64)
    return _orders(out, decode_fixed_quant_nb(aid, bid, ask, order_size, tab, out))


def decode_spread_skew(action_id: int, mid_half: int, table, order_size: int):
    """Quote ``mid - s + k`` / ``mid + s + k`` for the table row ``(s, k)``; mid in half ticks."""
    tab = np.asarray(table, dtype=np.float64).reshape(-1, 2)
    aid = _check(action_id, len(tab))
    out = np.zeros((2, 3), dtype=np.int64)
    return _orders(out, decode_spread_skew_nb(aid, int(mid_half), order_size, tab, out))


def decode_avst(action_id: int, mid_half: int, inventory: float, time_left: float,
                params: AvStParams, order_size: int):
    """Inventory-skewed quotes with ``gamma = params.gamma_grid[action_id]``.

    ``inventory`` is in the model's units (lots divided by the inventory unit)
    and ``time_left`` is ``T - t``.
    """
    aid = _check(action_id, len(params.gamma_grid))
    out = np.zeros((2, 3), dtype=np.int64)
    n = decode_avst_nb(float(params.gamma_grid[aid]), int(mid_half), float(inventory),
                       params.sigma, params.kappa, float(time_left), order_size, out)
    return _orders(out, n)


def decode_exec(action_id: int, book_tops, base_size: int, complex: bool, *, direction: Side,
                task_remaining: int, multipliers=(1, 2, 5), last_tops=None,
                mid_half: int | None = None):
    """Executor order at one of the four reference prices (times a multiplier if complex)."""
    mult = np.asarray(multipliers, dtype=np.int64)
    aid = _check(action_id, N_EXEC_PRICES * (len(mult) if complex else 1))
    bid, ask = _tops(book_tops)
    lb, la = _tops(last_tops) if last_tops is not None else (bid, ask)
    if mid_half is None:
        mid_half = bid + ask if bid != NO_PRICE and ask != NO_PRICE else 2 * max(bid, ask, lb, la)
    out = np.zeros((2, 3), dtype=np.int64)
    n = decode_exec_nb(aid, bool(complex), int(direction), bid, ask, int(mid_half), lb, la,
                       base_size, mult, int(task_remaining), out)
    return _orders(out, n)


def decode_directional(action_id: int, book_tops, order_size: int, *, last_mid_half: int = 0,
                       half_spread: float = 1.0):
    aid = _check(action_id, 3)
    bid, ask = mm_tops(*_tops(book_tops), last_mid_half, half_spread)
    out = np.zeros((2, 3), dtype=np.int64)
    return _orders(out, decode_directional_nb(aid, bid, ask, order_size, out))
