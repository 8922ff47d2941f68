"""Scripted comparison policies: TWAP execution and inventory-aware AvSt quoting.

Both produce explicit ``(side, price, qty)`` order rows that the environment
accepts in place of decoded actions (``LobEnv.step(..., orders=...)``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numba import njit

from .agents import actions as acts
from .config import AvStParams
from .env.core import AgentGroup, EnvState, LobEnv


def twap_schedule(task_size: int, steps: int) -> np.ndarray:
    """Per-step quantities differing by at most one lot and summing to ``task_size``."""
    if steps < 1 or task_size < 0:
        raise ValueError("need steps >= 1 and task_size >= 0")
    cum = (task_size * np.arange(1, steps + 1, dtype=np.int64)) // steps
    return np.diff(cum, prepend=0)


@dataclass(frozen=True)
class TwapPlan:
    schedule: np.ndarray
    mode: Literal["aggressive", "passive"] = "aggressive"

    @classmethod
    def even(cls, task_size: int, steps: int, mode="aggressive") -> "TwapPlan":
        return cls(twap_schedule(task_size, steps), mode)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.schedule)


def twap_quantity(plan: TwapPlan, step: int, executed: int, remaining: int) -> int:
    """Catch up to the schedule's cumulative target for ``step``, never beyond the task."""
    target = int(plan.cumulative[step]) - executed
    return max(0, min(target, remaining))


def twap_policy(plan: TwapPlan, step: int, direction: int, executed: int, remaining: int,
                book_tops, last_tops=None) -> list:
    """Order for one executor at ``step``: far touch when aggressive, near touch when passive."""
    if not 0 <= step < len(plan.schedule):
        raise ValueError(f"step {step} outside the {len(plan.schedule)}-step plan")
    q = twap_quantity(plan, step, executed, remaining)
    if q == 0:
        return []
    bid, ask = acts._tops(book_tops)
    lb, la = acts._tops(last_tops) if last_tops is not None else (bid, ask)
    ref = acts.FAR_TOUCH if plan.mode == "aggressive" else acts.NEAR_TOUCH
    price = acts.exec_price(ref, direction, bid, ask, max(bid + ask, 0), lb, la)
    return [(acts.Side(direction), int(price), q)]


def twap_orders(env: LobEnv, state: EnvState, group: AgentGroup, plan: TwapPlan):
    """Override rows ``(mask, orders)`` placing the TWAP order of every executor in ``group``."""
    E, n = state.n_envs, group.count
    c = group.cols
    task = group.spec.params.task_size
    rem = state.task_rem[:, c]
    step = np.minimum(state.step, len(plan.schedule) - 1)
    target = plan.cumulative[step][:, None] - (task - rem)
    qty = np.clip(target, 0, rem)
    ref = acts.FAR_TOUCH if plan.mode == "aggressive" else acts.NEAR_TOUCH
    rows = np.zeros((E, n, 2, 3), dtype=np.int64)
    _exec_prices(state.orders, state.counts, state.mid, state.last_bid, state.last_ask,
                 state.direction[:, c], ref, rows)
    rows[:, :, 0, 2] = qty
    return np.ones((E, n), dtype=bool), rows


@njit(cache=True)
def _exec_prices(orders, counts, mid, last_bid, last_ask, direction, ref, rows):
    for e in range(orders.shape[0]):
        nb = counts[e, 0]
        na = counts[e, 1]
        bid = orders[e, 0, nb - 1, 0] if nb > 0 else acts.NO_PRICE
        ask = orders[e, 1, na - 1, 0] if na > 0 else acts.NO_PRICE
        for j in range(direction.shape[1]):
            d = direction[e, j]
            rows[e, j, 0, 0] = d
            rows[e, j, 0, 1] = acts.exec_price(ref, d, bid, ask, mid[e], last_bid[e],
                                               last_ask[e])


def avst_policy(mid_half: int, inventory_lots: int, time_left: float, params: AvStParams,
                gamma: float, order_size: int, inventory_unit: int | None = None) -> list:
    """Both-sided quotes from the closed form at a fixed ``gamma``."""
    unit = inventory_unit or params.inventory_unit or order_size
    out = np.zeros((2, 3), dtype=np.int64)
    n = acts.decode_avst_nb(float(gamma), int(mid_half), inventory_lots / unit, params.sigma,
                            params.kappa, float(time_left), order_size, out)
    return acts._orders(out, n)


@njit(cache=True)
def _avst_rows(mid, inv, step, steps, gamma, sigma, kappa, horizon, unit, size, rows):
    for e in range(mid.shape[0]):
        time_left = horizon * (steps - step[e]) / steps
        for j in range(inv.shape[1]):
            acts.decode_avst_nb(gamma, mid[e], inv[e, j] / unit, sigma, kappa, time_left, size,
                                rows[e, j])


def avst_orders(env: LobEnv, state: EnvState, group: AgentGroup, gamma: float):
    p = group.spec.params
    unit = p.avst.inventory_unit or p.order_size
    rows = np.zeros((state.n_envs, group.count, 2, 3), dtype=np.int64)
    _avst_rows(state.mid, state.inv[:, group.cols], state.step, env.cfg.steps_per_episode,
               float(gamma), p.avst.sigma, p.avst.kappa, p.avst.horizon, float(unit),
               p.order_size, rows)
    return np.ones((state.n_envs, group.count), dtype=bool), rows
