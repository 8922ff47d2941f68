"""Numba kernels stepping a batch of environments.

One call advances every environment by one step: decode actions into
orders, cancel stale agent orders, shuffle the agent messages, append the
step's replay slice, match everything and attribute fills. Reward and
observation arithmetic happens afterwards in numpy on the per-step totals
written here.

Per-agent integer parameters (``ip`` columns ``IP_*``) and float
parameters (``fp`` columns ``FP_*``) are packed by ``env.core``.
"""
import numpy as np
from numba import njit

from ..agents import actions as acts
from ..lob import kernel as K
from ..lob.types import AGENT_ID_BASE, AGENT_ID_STRIDE, MSG_WIDTH, TR_WIDTH
from .rng import RESET_STEP, uniform

IP_SPACE = 0
IP_SIZE = 1
IP_EXEC = 2
IP_TASK = 3
IP_DIR_MODE = 4
IP_UNIT = 5
IP_WIDTH = 6

FP_HALF_SPREAD = 0
FP_SIGMA = 1
FP_KAPPA = 2
FP_HORIZON = 3
FP_WIDTH = 4

NO_PRICE = acts.NO_PRICE


@njit(cache=True, inline="always")
def _top(orders, counts, e, s):
    n = counts[e, s]
    return orders[e, s, n - 1, K.O_PRICE] if n > 0 else NO_PRICE


@njit(cache=True)
def _decode(a, aid, ip, fp, fq, ss, gamma, mult, n_mult, bid, ask, mid_half, last_bid,
            last_ask, inventory, step, steps, remaining, direction, out):
    space = ip[a, IP_SPACE]
    size = ip[a, IP_SIZE]
    if space == acts.EXEC_SIMPLE or space == acts.EXEC_COMPLEX:
        return acts.decode_exec_nb(aid, space == acts.EXEC_COMPLEX, direction, bid, ask,
                                   mid_half, last_bid, last_ask, size, mult[a, : n_mult[a]],
                                   remaining, out)
    if space == acts.SPREAD_SKEW:
        return acts.decode_spread_skew_nb(aid, mid_half, size, ss[a], out)
    if space == acts.AVST:
        horizon = fp[a, FP_HORIZON]
        time_left = horizon * (steps - step) / steps
        return acts.decode_avst_nb(gamma[a, aid], mid_half, inventory / ip[a, IP_UNIT],
                                   fp[a, FP_SIGMA], fp[a, FP_KAPPA], time_left, size, out)
    b, k = acts.mm_tops(bid, ask, mid_half, fp[a, FP_HALF_SPREAD])
    if space == acts.FIXED_QUANT:
        return acts.decode_fixed_quant_nb(aid, b, k, size, fq[a], out)
    return acts.decode_directional_nb(aid, b, k, size, out)


@njit(cache=True)
def _push(buf, n, time, kind, side, price, qty, oid, tid):
    buf[n, 0] = time
    buf[n, 1] = kind
    buf[n, 2] = side
    buf[n, 3] = price
    buf[n, 4] = qty
    buf[n, 5] = oid
    buf[n, 6] = tid
    return n + 1


@njit(cache=True)
def agent_messages(orders, counts, e, a, new, n_new, is_exec, remaining, time, next_oid,
                   buf, nb):
    """Append agent ``a``'s cancels and new orders to ``buf``.

    Resting orders whose (side, price) matches a new order are kept, and that
    new order only tops the level up to its quantity. An executor never has
    more than its remaining task resting or in flight.
    Returns (rows used, orders issued).
    """
    tid = a + 1
    same0 = 0
    same1 = 0
    elsewhere = 0
    for s in range(2):
        side = 1 if s == 0 else -1
        for i in range(counts[e, s]):
            if orders[e, s, i, K.O_TID] != tid:
                continue
            p = orders[e, s, i, K.O_PRICE]
            q = orders[e, s, i, K.O_QTY]
            if n_new > 0 and new[0, 0] == side and new[0, 1] == p:
                same0 += q
            elif n_new > 1 and new[1, 0] == side and new[1, 1] == p:
                same1 += q
            else:
                nb = _push(buf, nb, time, K.K_DELETE, side, p, q, orders[e, s, i, K.O_OID], tid)
                elsewhere += q
    issued = 0
    for j in range(n_new):
        q = new[j, 2]
        if is_exec:
            cap = remaining - elsewhere
            if q > cap:
                q = cap
        q -= same0 if j == 0 else same1
        if q > 0:
            nb = _push(buf, nb, time, K.K_NEW, new[j, 0], new[j, 1], q, next_oid + issued, tid)
            issued += 1
    return nb, issued


@njit(cache=True)
def step_kernel(orders, counts, meta, messages, m, steps, start, step, rcount, keys,
                mid, prev_mid, mid_sum, n_proc, last_bid, last_ask,
                inv, inv_prev, cash, task_rem, direction, id_next,
                bq, bn, sq, sn, tot_q, tot_n,
                actions, override_mask, override, ip, fp, fq, ss, gamma, mult, n_mult,
                allow_self_trade, protect_agents, buf, trades, new, record, rec, rec_n):
    E = orders.shape[0]
    A = inv.shape[1]
    for e in range(E):
        bid = _top(orders, counts, e, 0)
        ask = _top(orders, counts, e, 1)
        lo = start[e] + step[e] * m
        time = messages[lo, 0]
        nb = 0
        for a in range(A):
            inv_prev[e, a] = inv[e, a]
            bq[e, a] = 0
            bn[e, a] = 0
            sq[e, a] = 0
            sn[e, a] = 0
            is_exec = ip[a, IP_EXEC] == 1
            if override_mask[e, a]:
                n_new = 0
                for j in range(2):
                    if override[e, a, j, 2] > 0:
                        new[n_new, 0] = override[e, a, j, 0]
                        new[n_new, 1] = override[e, a, j, 1] if override[e, a, j, 1] > 1 else 1
                        new[n_new, 2] = override[e, a, j, 2]
                        n_new += 1
                if is_exec and n_new > 1:
                    n_new = 1
            else:
                n_new = _decode(a, actions[e, a], ip, fp, fq, ss, gamma, mult, n_mult, bid,
                                ask, mid[e], last_bid[e], last_ask[e], inv[e, a], step[e],
                                steps, task_rem[e, a], direction[e, a], new)
            oid = AGENT_ID_BASE + a * AGENT_ID_STRIDE + id_next[e, a]
            nb, issued = agent_messages(orders, counts, e, a, new, n_new, is_exec,
                                        task_rem[e, a], time, oid, buf, nb)
            id_next[e, a] += issued
        # uniform shuffle of the agent messages (Fisher-Yates)
        for i in range(nb - 1, 0, -1):
            j = int(uniform(keys[e], rcount[e], step[e], i) * (i + 1))
            if j != i:
                for c in range(MSG_WIDTH):
                    t = buf[i, c]
                    buf[i, c] = buf[j, c]
                    buf[j, c] = t
        nt = 0
        last = mid[e]
        msum = 0
        for i in range(nb):
            nt = K.process_one(orders[e], counts[e], meta[e], buf[i], trades, nt,
                               allow_self_trade, protect_agents)
            last = K.mid_half(orders[e], counts[e], last)
            msum += last
        for i in range(lo, lo + m):
            nt = K.process_one(orders[e], counts[e], meta[e], messages[i], trades, nt,
                               allow_self_trade, protect_agents)
            last = K.mid_half(orders[e], counts[e], last)
            msum += last
        # fill attribution
        for k in range(nt):
            price = trades[k, 0]
            q = trades[k, 1]
            aggr_side = trades[k, 2]
            for who in range(2):
                tid = trades[k, 4] if who == 0 else trades[k, 3]
                if tid <= 0:
                    continue
                a = tid - 1
                buy = (aggr_side == 1) if who == 0 else (aggr_side != 1)
                if buy:
                    bq[e, a] += q
                    bn[e, a] += price * q
                    inv[e, a] += q
                    cash[e, a] -= price * q
                else:
                    sq[e, a] += q
                    sn[e, a] += price * q
                    inv[e, a] -= q
                    cash[e, a] += price * q
        if record:
            keep = nt if nt <= rec.shape[1] else rec.shape[1]
            rec[e, :keep] = trades[:keep]
            rec_n[e] = keep
        for a in range(A):
            tot_q[e, a] += bq[e, a] + sq[e, a]
            tot_n[e, a] += bn[e, a] + sn[e, a]
            if ip[a, IP_EXEC] == 1:
                done_q = bq[e, a] if direction[e, a] == 1 else sq[e, a]
                r = task_rem[e, a] - done_q
                task_rem[e, a] = r if r > 0 else 0
        prev_mid[e] = mid[e]
        mid[e] = last
        mid_sum[e] = msum
        n_proc[e] = nb + m
        b = _top(orders, counts, e, 0)
        k2 = _top(orders, counts, e, 1)
        if b != NO_PRICE:
            last_bid[e] = b
        if k2 != NO_PRICE:
            last_ask[e] = k2
        step[e] += 1


@njit(cache=True)
def reset_kernel(env_ids, rows, starts, episodes, orders, counts, meta, state_bids, state_asks,
                 messages, start, step, rcount, keys, mid, prev_mid, mid_sum, n_proc,
                 last_bid, last_ask, inv, inv_prev, cash, task_rem, direction, id_next,
                 bq, bn, sq, sn, tot_q, tot_n, p_init, episode, ip, synth_base):
    A = inv.shape[1]
    for n in range(env_ids.shape[0]):
        e = env_ids[n]
        r = rows[n]
        counts[e, 0] = 0
        counts[e, 1] = 0
        meta[e, :] = 0
        nb = 0
        while nb < state_bids.shape[1] and state_bids[r, nb, 1] > 0:
            nb += 1
        na = 0
        while na < state_asks.shape[1] and state_asks[r, na, 1] > 0:
            na += 1
        K.init_levels(orders[e], counts[e], meta[e], 0, state_bids[r, :nb], synth_base)
        K.init_levels(orders[e], counts[e], meta[e], 1, state_asks[r, :na], synth_base + nb)
        start[e] = starts[n]
        episode[e] = episodes[n]
        step[e] = 0
        rcount[e] += 1
        fallback = 2
        for i in range(starts[n], messages.shape[0]):
            if messages[i, 1] == K.K_NEW:
                fallback = 2 * messages[i, 3]
                break
        m0 = K.mid_half(orders[e], counts[e], fallback)
        mid[e] = m0
        prev_mid[e] = m0
        p_init[e] = m0
        mid_sum[e] = 0
        n_proc[e] = 0
        b = _top(orders, counts, e, 0)
        k = _top(orders, counts, e, 1)
        last_bid[e] = b if b != NO_PRICE else (m0 - 1) // 2
        last_ask[e] = k if k != NO_PRICE else (m0 + 2) // 2
        for a in range(A):
            inv[e, a] = 0
            inv_prev[e, a] = 0
            cash[e, a] = 0
            bq[e, a] = 0
            bn[e, a] = 0
            sq[e, a] = 0
            sn[e, a] = 0
            tot_q[e, a] = 0
            tot_n[e, a] = 0
            id_next[e, a] = 0
            if ip[a, IP_EXEC] == 1:
                task_rem[e, a] = ip[a, IP_TASK]
                mode = ip[a, IP_DIR_MODE]
                if mode == 0:
                    u = uniform(keys[e], rcount[e], RESET_STEP, a)
                    direction[e, a] = 1 if u < 0.5 else -1
                else:
                    direction[e, a] = mode
            else:
                task_rem[e, a] = 0
                direction[e, a] = 0


@njit(cache=True)
def book_views(orders, counts, depth, A, l2, quotes):
    """Top-``depth`` levels per env and each agent's best own quote per side."""
    E = orders.shape[0]
    for e in range(E):
        for s in range(2):
            for d in range(depth):
                l2[e, s, d, 0] = 0
                l2[e, s, d, 1] = 0
            k = -1
            for i in range(counts[e, s] - 1, -1, -1):
                p = orders[e, s, i, K.O_PRICE]
                if k >= 0 and l2[e, s, k, 0] == p:
                    l2[e, s, k, 1] += orders[e, s, i, K.O_QTY]
                else:
                    if k + 1 == depth:
                        break
                    k += 1
                    l2[e, s, k, 0] = p
                    l2[e, s, k, 1] = orders[e, s, i, K.O_QTY]
        for a in range(A):
            quotes[e, a, 0] = NO_PRICE
            quotes[e, a, 1] = 0
            quotes[e, a, 2] = NO_PRICE
            quotes[e, a, 3] = 0
        for s in range(2):
            for i in range(counts[e, s] - 1, -1, -1):
                tid = orders[e, s, i, K.O_TID]
                if tid <= 0 or tid > A:
                    continue
                a = tid - 1
                c = 2 * s
                if quotes[e, a, c] == NO_PRICE:
                    quotes[e, a, c] = orders[e, s, i, K.O_PRICE]
                quotes[e, a, c + 1] += orders[e, s, i, K.O_QTY]


def scratch_rows(n_agents: int, capacity: int) -> int:
    """Upper bound on agent messages per step: two orders per agent plus every resting order."""
    return 2 * n_agents + 2 * capacity


def trade_rows(n_agents: int, capacity: int, messages_per_step: int) -> int:
    return K.trade_buffer(scratch_rows(n_agents, capacity) + messages_per_step,
                          capacity).shape[0]


def alloc_scratch(n_agents: int, capacity: int, messages_per_step: int):
    buf = np.zeros((scratch_rows(n_agents, capacity), MSG_WIDTH), dtype=np.int64)
    trades = np.zeros((trade_rows(n_agents, capacity, messages_per_step), TR_WIDTH),
                      dtype=np.int64)
    new = np.zeros((2, 3), dtype=np.int64)
    return buf, trades, new
