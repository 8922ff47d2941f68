"""Randomized message sequences for stress-testing the matcher.

The mix covers resting and crossing limit orders, cancels/deletes/executions
of live, dead and never-seen ids, and the no-op kinds (hidden executions,
crosses, halts). Issued ids enter a pool that deletes draw from; once the
pool reaches ``max_live`` new-order events turn into deletes, which bounds
the number of live orders. Random draws come from a seeded numpy
``Generator``; the numba loop only consumes them.
"""
import numpy as np
from numba import njit

from .types import MSG_WIDTH


@njit(cache=True)
def _build(u, n, start_mid, band, max_qty, max_live):
    msgs = np.zeros((n, MSG_WIDTH), dtype=np.int64)
    sides = np.zeros(n + 1, dtype=np.int64)
    pool = np.zeros(n + 1, dtype=np.int64)
    npool = 0
    next_id = 1
    mid = start_mid
    t = 0
    for i in range(n):
        r = u[i, 0]
        t += int(u[i, 5] * 1000)
        if u[i, 6] < 0.02:
            step = 1 if u[i, 7] < 0.5 else -1
            if (mid - start_mid) * step > 40:
                step = -step
            mid += step
        msgs[i, 0] = t
        if r < 0.50 and npool < max_live:
            side = 1 if u[i, 1] < 0.5 else -1
            off = int(u[i, 2] * (2 * band + 1)) - band
            # mostly passive, sometimes crossing
            price = mid - side * off if u[i, 3] < 0.85 else mid + side * (abs(off) // 3)
            if price < 1:
                price = 1
            msgs[i, 1] = 1
            msgs[i, 2] = side
            msgs[i, 3] = price
            msgs[i, 4] = 1 + int(u[i, 4] * max_qty)
            msgs[i, 5] = next_id
            sides[next_id] = side
            pool[npool] = next_id
            npool += 1
            next_id += 1
        elif r < 0.95:
            if r < 0.72:
                kind = 3
            elif r < 0.83:
                kind = 2
            else:
                kind = 4
            target = -1
            if u[i, 1] < 0.8 and npool > 0:
                j = int(u[i, 2] * npool)
                target = pool[j]
                if kind == 3:
                    npool -= 1
                    pool[j] = pool[npool]
            elif next_id > 1 and u[i, 1] < 0.9:
                # any issued id: often already gone
                target = 1 + int(u[i, 2] * (next_id - 1))
            msgs[i, 1] = kind
            if target >= 1:
                msgs[i, 2] = sides[target]
                msgs[i, 5] = target
            else:
                msgs[i, 2] = 1 if u[i, 3] < 0.5 else -1
                msgs[i, 5] = 10_000_000_000 + i
            msgs[i, 3] = mid
            msgs[i, 4] = 1 + int(u[i, 4] * max_qty)
        else:
            msgs[i, 1] = 5 + int(u[i, 1] * 3)
            msgs[i, 2] = 1 if u[i, 2] < 0.5 else -1
            msgs[i, 3] = mid
            msgs[i, 4] = 1 + int(u[i, 4] * max_qty)
            msgs[i, 5] = 20_000_000_000 + i
    return msgs


def random_messages(n: int, seed: int, *, start_mid: int = 10_000, band: int | None = None,
                    max_qty: int = 40, max_live: int | None = None) -> np.ndarray:
    """``n`` random messages; unset ``band``/``max_live`` are drawn from the seed."""
    rng = np.random.default_rng(seed)
    if band is None:
        band = int(rng.choice([2, 5, 12]))
    if max_live is None:
        max_live = int(rng.choice([60, 200, 600]))
    u = rng.random((n, 8))
    return _build(u, n, start_mid, band, max_qty, max_live)
