"""Multi-agent limit-order-book environment.

:class:`LobEnv` steps a batch of ``n_envs`` independent environments that
share one read-only :class:`MessageStore`. State lives in an
:class:`EnvState` of arrays with a leading environment axis; ``step`` is a
pure transition (it copies the state), ``step_inplace`` is the hot path.

A step runs five stages: decode each agent's action into orders and cancel
its stale resting orders, shuffle all agent messages uniformly, append the
step's replay slice, match everything in that order, then compute rewards,
observations and infos from the attributed fills.

Agent groups are the configured :class:`AgentSpec` entries; agent ``a``
(global index over all groups) trades with trader id ``a + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from ..agents import actions as acts
from ..agents import rewards as R
from ..agents.observations import (
    ObsContext, build_exec_observations, build_mm_observations, observation_dim,
    observation_layout,
)
from ..config import AgentSpec, AgentType, EnvConfig
from ..data.store import EpisodeIndex, MessageStore
from ..lob import kernel as LK
from ..lob.types import SYNTH_ID_BASE, TR_WIDTH, Kind, Message, Side
from . import kernel as EK
from .rng import env_keys, seed_key


class TerminalStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentGroup:
    name: str
    spec: AgentSpec
    cols: np.ndarray
    arity: int
    obs_dim: int

    @property
    def is_exec(self) -> bool:
        return self.spec.type == AgentType.EXECUTOR

    @property
    def count(self) -> int:
        return len(self.cols)


class EnvLayout:
    """Agent registry compiled into the packed parameter arrays the kernel reads."""

    def __init__(self, cfg: EnvConfig):
        self.groups: list[AgentGroup] = []
        specs: list[AgentSpec] = []
        for spec in cfg.agents:
            start = len(specs)
            specs += [spec] * spec.count
            self.groups.append(AgentGroup(
                spec.name, spec, np.arange(start, len(specs)),
                acts.action_arity(spec.action_space, spec.params),
                observation_dim(spec.observation_space, cfg.obs_depth)))
        self.n_agents = A = len(specs)
        width = max([12] + [g.arity for g in self.groups])
        self.ip = np.zeros((A, EK.IP_WIDTH), dtype=np.int64)
        self.fp = np.zeros((A, EK.FP_WIDTH), dtype=np.float64)
        self.fq = np.zeros((A, width, 2), dtype=np.int64)
        self.ss = np.zeros((A, width, 2), dtype=np.float64)
        self.gamma = np.ones((A, width), dtype=np.float64)
        self.mult = np.ones((A, width), dtype=np.int64)
        self.n_mult = np.ones(A, dtype=np.int64)
        self.arity = np.zeros(A, dtype=np.int64)
        for a, spec in enumerate(specs):
            p = spec.params
            self.ip[a, EK.IP_SPACE] = acts.SPACE_CODES[spec.action_space]
            self.ip[a, EK.IP_SIZE] = p.order_size
            self.ip[a, EK.IP_EXEC] = int(spec.type == AgentType.EXECUTOR)
            self.ip[a, EK.IP_TASK] = p.task_size
            self.ip[a, EK.IP_DIR_MODE] = {"random": 0, "buy": 1, "sell": -1}[p.task_direction]
            self.ip[a, EK.IP_UNIT] = p.avst.inventory_unit or p.order_size
            self.fp[a] = (p.default_half_spread, p.avst.sigma, p.avst.kappa, p.avst.horizon)
            tab = acts.fixed_quant_table(p.fixed_quant_table)
            self.fq[a, : len(tab)] = tab
            self.ss[a, : len(p.spread_skew_table)] = p.spread_skew_table
            self.gamma[a, : len(p.avst.gamma_grid)] = p.avst.gamma_grid
            self.mult[a, : len(p.exec_multipliers)] = p.exec_multipliers
            self.n_mult[a] = len(p.exec_multipliers)
            self.arity[a] = acts.action_arity(spec.action_space, p)

    def group(self, name: str) -> AgentGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def layout(self, name: str, depth: int) -> list[str]:
        return observation_layout(self.group(name).spec.observation_space, depth)


@dataclass
class EnvState:
    """Arrays for a batch of environments; mids and ``p_init`` are in half ticks."""

    orders: np.ndarray      # [E, 2, C, 5]
    counts: np.ndarray      # [E, 2]
    meta: np.ndarray        # [E, 4]
    start: np.ndarray       # [E] first message offset of the episode
    episode: np.ndarray     # [E] episode id
    step: np.ndarray        # [E]
    rcount: np.ndarray      # [E] resets so far; the RNG episode counter
    keys: np.ndarray        # [E] uint64 RNG keys
    mid: np.ndarray         # [E] M_t
    prev_mid: np.ndarray    # [E] M_{t-1}
    mid_sum: np.ndarray     # [E] sum of mids after each message of the last step
    n_proc: np.ndarray      # [E] messages processed in the last step
    last_bid: np.ndarray    # [E] last valid best bid
    last_ask: np.ndarray    # [E]
    p_init: np.ndarray      # [E] mid at reset
    inv: np.ndarray         # [E, A]
    inv_prev: np.ndarray    # [E, A] inventory entering the last step
    cash: np.ndarray        # [E, A] tick-lots
    task_rem: np.ndarray    # [E, A]
    direction: np.ndarray   # [E, A] +1 buy task, -1 sell task, 0 non-executor
    id_next: np.ndarray     # [E, A]
    bq: np.ndarray          # [E, A] last-step bought lots
    bn: np.ndarray          # [E, A] last-step bought notional
    sq: np.ndarray          # [E, A]
    sn: np.ndarray          # [E, A]
    tot_q: np.ndarray       # [E, A] lots filled this episode
    tot_n: np.ndarray       # [E, A] notional filled this episode

    def copy(self) -> "EnvState":
        return EnvState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def equals(self, other: "EnvState") -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                   for f in fields(self))

    @property
    def n_envs(self) -> int:
        return len(self.step)

    @property
    def mbar(self) -> np.ndarray:
        """Average mid over the last step, in ticks."""
        return self.mid_sum / np.maximum(2 * self.n_proc, 1)


class StepOutput(NamedTuple):
    observations: dict      # group name -> [E, n, obs_dim]
    rewards: dict           # group name -> [E, n]
    dones: dict             # group name -> [E, n] bool
    infos: dict


def _empty_state(E: int, A: int, C: int) -> EnvState:
    i = lambda *s: np.zeros(s, dtype=np.int64)  # noqa: E731
    return EnvState(
        orders=i(E, 2, C, LK.O_WIDTH), counts=i(E, 2), meta=i(E, LK.M_WIDTH), start=i(E),
        episode=i(E), step=i(E), rcount=i(E), keys=np.zeros(E, dtype=np.uint64), mid=i(E),
        prev_mid=i(E), mid_sum=i(E), n_proc=i(E), last_bid=i(E), last_ask=i(E), p_init=i(E),
        inv=i(E, A), inv_prev=i(E, A), cash=i(E, A), task_rem=i(E, A), direction=i(E, A),
        id_next=i(E, A), bq=i(E, A), bn=i(E, A), sq=i(E, A), sn=i(E, A), tot_q=i(E, A),
        tot_n=i(E, A))


class LobEnv:
    """Batched environment over a shared message store.

    ``record_trades`` keeps every trade of the last step per env (for
    inspection and replay logs); training leaves it off.
    """

    def __init__(self, cfg: EnvConfig, store: MessageStore, index: EpisodeIndex,
                 n_envs: int = 1, record_trades: bool = False):
        if index.messages_per_step != cfg.messages_per_step or \
                index.steps_per_episode != cfg.steps_per_episode:
            raise ValueError("episode index does not match the env config")
        self.cfg = cfg
        self.store = store
        self.index = index
        self.n_envs = n_envs
        self.layout = EnvLayout(cfg)
        A = self.layout.n_agents
        C = cfg.book_capacity
        self._buf, self._trades, self._new = EK.alloc_scratch(A, C, cfg.messages_per_step)
        self.record_trades = record_trades
        rows = self._trades.shape[0] if record_trades else 1
        self._rec = np.zeros((n_envs if record_trades else 1, rows, TR_WIDTH), dtype=np.int64)
        self._rec_n = np.zeros(n_envs if record_trades else 1, dtype=np.int64)
        self._no_override = np.zeros((n_envs, max(A, 1)), dtype=np.bool_)
        self._override = np.zeros((n_envs, max(A, 1), 2, 3), dtype=np.int64)
        self._l2 = np.zeros((n_envs, 2, cfg.obs_depth, 2), dtype=np.int64)
        self._quotes = np.zeros((n_envs, max(A, 1), 4), dtype=np.int64)

    @property
    def groups(self) -> list[AgentGroup]:
        return self.layout.groups

    @property
    def n_episodes(self) -> int:
        return len(self.index)

    # -- lifecycle ---------------------------------------------------------------
    def init_state(self, keys: np.ndarray) -> EnvState:
        keys = np.asarray(keys, dtype=np.uint64).reshape(-1)
        if len(keys) != self.n_envs:
            raise ValueError(f"need {self.n_envs} keys, got {len(keys)}")
        st = _empty_state(self.n_envs, self.layout.n_agents, self.cfg.book_capacity)
        st.keys[:] = keys
        return st

    def reset_envs(self, state: EnvState, env_ids, episodes) -> None:
        """Start ``episodes`` in environments ``env_ids`` (in place)."""
        env_ids = np.asarray(env_ids, dtype=np.int64).reshape(-1)
        episodes = np.asarray(episodes, dtype=np.int64).reshape(-1)
        if len(env_ids) != len(episodes):
            raise ValueError("env_ids and episodes differ in length")
        starts = np.array([self.index.start(int(ep)) for ep in episodes], dtype=np.int64)
        rows = np.array([self.store._pos[int(s)] for s in starts], dtype=np.int64)
        if len(self.store.state_bids) and self.store.depth > self.cfg.book_capacity:
            for r in rows:
                deep = max(int((self.store.state_bids[r, :, 1] > 0).sum()),
                           int((self.store.state_asks[r, :, 1] > 0).sum()))
                if deep > self.cfg.book_capacity:
                    raise ValueError("initial book state deeper than book capacity")
        s = state
        EK.reset_kernel(env_ids, rows, starts, episodes, s.orders, s.counts, s.meta,
                        self.store.state_bids, self.store.state_asks, self.store.messages,
                        s.start, s.step, s.rcount, s.keys, s.mid, s.prev_mid, s.mid_sum,
                        s.n_proc, s.last_bid, s.last_ask, s.inv, s.inv_prev, s.cash,
                        s.task_rem, s.direction, s.id_next, s.bq, s.bn, s.sq, s.sn, s.tot_q,
                        s.tot_n, s.p_init, s.episode, self.layout.ip, SYNTH_ID_BASE)

    def reset(self, episodes, keys) -> tuple[EnvState, dict]:
        """Fresh state with env ``i`` starting ``episodes[i]`` under RNG key ``keys[i]``."""
        state = self.init_state(keys)
        self.reset_envs(state, np.arange(self.n_envs), episodes)
        return state, self.observations(state)

    def step(self, state: EnvState, actions, orders=None) -> tuple[EnvState, StepOutput]:
        new = state.copy()
        return new, self.step_inplace(new, actions, orders)

    def step_inplace(self, state: EnvState, actions, orders=None) -> StepOutput:
        """Advance every environment one step.

        ``actions`` maps group name to ``[E, count]`` action ids (or is an
        ``[E, A]`` array). ``orders`` optionally maps group name to
        ``(mask [E, count], orders [E, count, 2, 3])`` of explicit
        ``(side, price, qty)`` rows that replace the decoded action where
        ``mask`` is set (used by scripted baselines).
        """
        steps = self.cfg.steps_per_episode
        if np.any(state.step >= steps):
            raise TerminalStateError("step called on a terminal state; reset first")
        act = self._actions(actions)
        mask, override = self._overrides(orders)
        s = self.store
        st = state
        EK.step_kernel(
            st.orders, st.counts, st.meta, s.messages, self.cfg.messages_per_step, steps,
            st.start, st.step, st.rcount, st.keys, st.mid, st.prev_mid, st.mid_sum, st.n_proc,
            st.last_bid, st.last_ask, st.inv, st.inv_prev, st.cash, st.task_rem, st.direction,
            st.id_next, st.bq, st.bn, st.sq, st.sn, st.tot_q, st.tot_n, act, mask, override,
            self.layout.ip, self.layout.fp, self.layout.fq, self.layout.ss, self.layout.gamma,
            self.layout.mult, self.layout.n_mult, self.cfg.allow_self_trade,
            self.cfg.protect_agent_orders, self._buf, self._trades, self._new,
            self.record_trades, self._rec, self._rec_n)
        return self._outputs(st)

    # -- helpers -----------------------------------------------------------------
    def _actions(self, actions) -> np.ndarray:
        E, A = self.n_envs, self.layout.n_agents
        if isinstance(actions, dict):
            out = np.zeros((E, max(A, 1)), dtype=np.int64)
            for g in self.groups:
                if g.name not in actions:
                    raise KeyError(f"no actions for agent group {g.name!r}")
                out[:, g.cols] = np.asarray(actions[g.name], dtype=np.int64).reshape(E, g.count)
        else:
            out = np.ascontiguousarray(actions, dtype=np.int64).reshape(E, -1)
            if out.shape[1] != A:
                raise ValueError(f"expected {A} actions per env, got {out.shape[1]}")
            if A == 0:
                out = np.zeros((E, 1), dtype=np.int64)
        if A:
            bad = (out[:, :A] < 0) | (out[:, :A] >= self.layout.arity[None, :])
            if bad.any():
                e, a = map(int, np.argwhere(bad)[0])
                raise ValueError(
                    f"action id {out[e, a]} out of range [0, {self.layout.arity[a]}) "
                    f"for agent {a} in env {e}")
        return out

    def _overrides(self, orders):
        if not orders:
            return self._no_override, self._override
        mask = np.zeros_like(self._no_override)
        override = np.zeros_like(self._override)
        for name, (m, rows) in orders.items():
            g = self.layout.group(name)
            mask[:, g.cols] = np.asarray(m, dtype=np.bool_).reshape(self.n_envs, g.count)
            override[:, g.cols] = np.asarray(rows, dtype=np.int64).reshape(
                self.n_envs, g.count, 2, 3)
        return mask, override

    def context(self, st: EnvState) -> ObsContext:
        EK.book_views(st.orders, st.counts, self.cfg.obs_depth, self.layout.n_agents,
                      self._l2, self._quotes)
        return ObsContext(st.inv, st.cash, st.task_rem, st.direction, st.bq, st.sq, st.p_init,
                          st.mid, st.prev_mid, st.last_bid, st.last_ask, self._l2,
                          self._quotes, st.step, self.cfg.steps_per_episode)

    def observations(self, st: EnvState, ctx: ObsContext | None = None) -> dict:
        ctx = ctx or self.context(st)
        out = {}
        for g in self.groups:
            p = g.spec.params
            if g.is_exec:
                out[g.name] = build_exec_observations(ctx, g.cols, g.spec.observation_space,
                                                      p.task_size, p.order_size)
            else:
                out[g.name] = build_mm_observations(ctx, g.cols, g.spec.observation_space,
                                                    p.inventory_cap, p.order_size)
        return out

    def rewards(self, st: EnvState) -> dict:
        out = {}
        mbar = st.mbar[:, None]
        mid = st.mid[:, None] / 2.0
        prev = st.prev_mid[:, None] / 2.0
        terminal = (st.step >= self.cfg.steps_per_episode)[:, None].astype(np.float64)
        for g in self.groups:
            c = g.cols
            p = g.spec.params
            t = R.FillTotals(st.bq[:, c], st.bn[:, c], st.sq[:, c], st.sn[:, c])
            if g.is_exec:
                p_init = st.p_init[:, None] / 2.0
                r = R.reward_exec_totals(t.buy_qty + t.sell_qty, t.buy_notional + t.sell_notional,
                                         mbar, p_init, st.direction[:, c], p.exec_lambda,
                                         terminal, st.task_rem[:, c], p.unfilled_penalty_coef)
            else:
                if g.spec.reward == "spooner":
                    r = R.reward_spooner_totals(t, mbar, st.inv_prev[:, c], mid, prev,
                                                p.reward_lambda)
                else:
                    r = R.reward_buysell_totals(t, mbar)
                if p.inventory_penalty == "quadratic":
                    r = r - R.quadratic_inventory_penalty(st.inv[:, c], p.rho, p.inventory_cap)
            out[g.name] = np.asarray(r, dtype=np.float64)
        return out

    def infos(self, st: EnvState) -> dict:
        mid = st.mid / 2.0
        pv = np.zeros(st.inv.shape, dtype=np.float64)
        slip = np.zeros(st.inv.shape, dtype=np.float64)
        for g in self.groups:
            c = g.cols
            inv = st.inv[:, c]
            if g.spec.params.reference_price == "far_touch":
                ref = R.far_touch_reference(inv, st.last_bid[:, None], st.last_ask[:, None],
                                            mid[:, None])
            else:
                ref = mid[:, None]
            pv[:, c] = R.portfolio_value(inv, st.cash[:, c], ref)
            if g.is_exec:
                slip[:, c] = R.slippage_totals(st.tot_q[:, c], st.tot_n[:, c],
                                               st.p_init[:, None] / 2.0, st.direction[:, c])
        info = {"inventory": st.inv.copy(), "cash": st.cash.copy(), "portfolio_value": pv,
                "slippage": slip, "task_remaining": st.task_rem.copy(),
                "filled": st.tot_q.copy(), "mid": mid, "mbar": st.mbar.copy()}
        if self.record_trades:
            info["trades"] = [self._rec[e, : self._rec_n[e]].copy() for e in range(self.n_envs)]
        return info

    def _outputs(self, st: EnvState) -> StepOutput:
        done = st.step >= self.cfg.steps_per_episode
        dones = {g.name: np.repeat(done[:, None], g.count, axis=1) for g in self.groups}
        return StepOutput(self.observations(st), self.rewards(st), dones, self.infos(st))


# -- single-environment convenience API ------------------------------------------
def make_env(cfg: EnvConfig, store: MessageStore, index: EpisodeIndex,
             record_trades: bool = True) -> LobEnv:
    return LobEnv(cfg, store, index, 1, record_trades)


def reset(env: LobEnv, episode_id: int, seed: int) -> tuple[EnvState, dict]:
    """Reset a single-env :class:`LobEnv` to ``episode_id`` with an RNG key derived from ``seed``."""
    if env.n_envs != 1:
        raise ValueError("reset() expects a single-environment LobEnv")
    if not 0 <= episode_id < env.n_episodes:
        raise IndexError(f"episode {episode_id} out of range [0, {env.n_episodes})")
    return env.reset([episode_id], [seed_key(seed)])


def step(env: LobEnv, state: EnvState, actions) -> tuple[EnvState, StepOutput]:
    return env.step(state, actions)


def vector_reset(env: LobEnv, episodes, seed: int) -> tuple[EnvState, dict]:
    return env.reset(episodes, env_keys(seed, env.n_envs))


# -- auto-cancel reference ------------------------------------------------------
class ActiveOrder(NamedTuple):
    order_id: int
    side: Side
    price: int
    quantity: int


def auto_cancel_messages(active_orders, new_messages, time: int = 0,
                         trader_id: int = 0) -> list[Message]:
    """Delete messages for every active order whose (side, price) no new message reuses."""
    reused = {(int(m.side), int(m.price)) for m in new_messages}
    return [Message(time, Kind.DELETE, Side(o.side), o.price, o.quantity, o.order_id, trader_id)
            for o in active_orders if (int(o.side), int(o.price)) not in reused]


def active_orders(state: EnvState, env: int, agent: int) -> list[ActiveOrder]:
    """Live orders bearing ``agent``'s trader id, bids then asks, best first."""
    out = []
    for s, side in ((0, Side.BID), (1, Side.ASK)):
        rows = state.orders[env, s, : state.counts[env, s]][::-1]
        for r in rows[rows[:, LK.O_TID] == agent + 1]:
            out.append(ActiveOrder(int(r[LK.O_OID]), side, int(r[LK.O_PRICE]),
                                   int(r[LK.O_QTY])))
    return out

