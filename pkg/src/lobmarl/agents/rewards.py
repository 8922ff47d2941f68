"""Reward and accounting functions.

Everything here is plain arithmetic so it works on Python ints, floats,
``fractions.Fraction`` (exact tests) and numpy arrays (the vectorised
environment path) alike. Prices and mids are in ticks; quantities in lots.

A fill is ``(price, quantity, sign)`` with sign +1 for a buy and -1 for a sell
from the agent's point of view. Aggregates are the per-step sums the
environment keeps: bought/sold quantity and their notionals.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np

BUY = 1
SELL = -1


class FillTotals(NamedTuple):
    buy_qty: object
    buy_notional: object
    sell_qty: object
    sell_notional: object


def totals(fills: Iterable) -> FillTotals:
    bq = bn = sq = sn = 0
    for price, qty, sign in fills:
        if sign == BUY:
            bq += qty
            bn += price * qty
        else:
            sq += qty
            sn += price * qty
    return FillTotals(bq, bn, sq, sn)


def _pos(x):
    if isinstance(x, np.ndarray):
        return np.maximum(x, 0)
    return x if x > 0 else 0 * x


def psi_buy_sell(t: FillTotals, mbar):
    """Buy edge ``sum (M - P_b) Q_b`` and sell edge ``sum (P_a - M) Q_a`` against mid ``mbar``."""
    return mbar * t.buy_qty - t.buy_notional, t.sell_notional - mbar * t.sell_qty


def reward_buysell_totals(t: FillTotals, mbar):
    psi_b, psi_s = psi_buy_sell(t, mbar)
    return psi_b + psi_s


def reward_buysell(fills, mbar):
    return reward_buysell_totals(totals(fills), mbar)


def reward_spooner_totals(t: FillTotals, mbar, inventory, mid, prev_mid, lam):
    """Spread capture plus inventory mark-to-market with the gain side damped by ``lam``.

    ``inventory`` is the position held over the mid move ``prev_mid -> mid``.
    """
    psi_inv = inventory * (mid - prev_mid)
    return reward_buysell_totals(t, mbar) + psi_inv - (1 - lam) * _pos(psi_inv)


def reward_spooner(fills, mbar, inventory, mid, prev_mid, lam):
    return reward_spooner_totals(totals(fills), mbar, inventory, mid, prev_mid, lam)


def quadratic_inventory_penalty(inventory, rho, inventory_cap):
    if not isinstance(inventory_cap, np.ndarray) and inventory_cap < 1:
        raise ValueError("inventory_cap must be >= 1")
    if isinstance(inventory, int) and isinstance(inventory_cap, int):
        # keep integer inputs exact instead of dropping to float division
        x = Fraction(inventory, inventory_cap)
    else:
        x = inventory / inventory_cap
    return rho * x * x


def portfolio_value(inventory, cash, ref_price):
    return inventory * ref_price + cash


def far_touch_reference(inventory, best_bid, best_ask, mid):
    """Liquidation price: the bid for a long position, the ask for a short one, mid when flat."""
    if isinstance(inventory, np.ndarray):
        return np.where(inventory > 0, best_bid, np.where(inventory < 0, best_ask, mid))
    if inventory > 0:
        return best_bid
    if inventory < 0:
        return best_ask
    return mid


def slippage_totals(qty, notional, p_init, direction):
    """Direction-adjusted cost versus ``p_init``; positive means worse than arrival.

    ``qty``/``notional`` sum all of the executor's fills; ``direction`` is +1
    for a buy task and -1 for a sell task.
    """
    return direction * (notional - p_init * qty)


def slippage(fills, p_init, direction):
    q = 0
    notional = 0
    for price, qty, *_ in fills:
        q += qty
        notional += price * qty
    return slippage_totals(q, notional, p_init, direction)


def reward_exec_totals(qty, notional, mbar, p_init, direction, lam_exec, terminal, remaining, coef):
    """Negative step slippage, a ``lam_exec``-weighted drift term and the unfilled-task penalty.

    The drift term credits the executed quantity with the move of the step's
    average mid away from the arrival price, signed by the task direction.
    """
    r = -slippage_totals(qty, notional, p_init, direction)
    r = r + lam_exec * direction * qty * (mbar - p_init)
    return r - terminal * coef * remaining * p_init


def reward_exec(fills, p_init, direction, lam_exec, terminal, remaining, coef, mbar=None):
    q = 0
    notional = 0
    for price, qty, *_ in fills:
        q += qty
        notional += price * qty
    m = p_init if mbar is None else mbar
    return reward_exec_totals(q, notional, m, p_init, direction, lam_exec, 1 if terminal else 0,
                              remaining, coef)
