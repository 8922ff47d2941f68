"""Throughput harness: random-action environment stepping over a grid of settings.

Each grid row fixes messages per step and agents per type, builds ``n_envs``
environments (split over ``workers`` forked processes), runs ``warmup``
steps that are not timed and then ``n_steps`` timed steps with uniformly
random actions and no learning. The timed loop only touches preallocated
buffers: actions are drawn into a fixed array, the batched step kernel
advances every environment, and episode ends reset from a precomputed
schedule. Observations and rewards are not built (the learning-side cost is
covered by :func:`run_rl_throughput`).

Report columns (CSV and JSON share them): ``messages_per_step``,
``agents_per_type``, ``n_agents``, ``n_envs``, ``n_steps``, ``workers``,
``wall_s``, ``steps_per_s`` (``n_envs * n_steps / wall_s``), ``msgs_per_s``
(replay messages only), ``utilization`` (mean busy share of the wall time
across workers), ``speedup`` and ``efficiency`` (against the one-worker row
of the same setting, when present).
"""
from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing as mp
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .config import AgentSpec, BenchConfig, EnvConfig, RunConfig
from .data.loader import load_store
from .data.store import MessageStore, build_episode_index
from .env import kernel as EK
from .env.core import LobEnv
from .env.rng import env_keys
from .lob.types import SYNTH_ID_BASE
from .ippo.rollout import WorkerError, _worker, split_ranges

COLUMNS = ("messages_per_step", "agents_per_type", "n_agents", "n_envs", "n_steps", "workers",
           "wall_s", "steps_per_s", "msgs_per_s", "utilization", "speedup", "efficiency")


@dataclass
class BenchRow:
    messages_per_step: int
    agents_per_type: int
    n_agents: int
    n_envs: int
    n_steps: int
    workers: int
    wall_s: float
    steps_per_s: float
    msgs_per_s: float
    utilization: float
    speedup: float | None = None
    efficiency: float | None = None
    worker_busy_s: list = field(default_factory=list)


def env_for(env_cfg: EnvConfig, messages_per_step: int, agents_per_type: int) -> EnvConfig:
    """``env_cfg`` with each agent group resized to ``agents_per_type`` agents."""
    agents = tuple(AgentSpec(**{**a.model_dump(), "count": agents_per_type})
                   for a in env_cfg.agents)
    return env_cfg.model_copy(update={"messages_per_step": messages_per_step, "agents": agents})


@njit(cache=True)
def _scale_actions(u, arity, out):
    # uniform [0, 1) draws to action ids without temporaries
    for e in range(u.shape[0]):
        for a in range(u.shape[1]):
            out[e, a] = int(u[e, a] * arity[a])


class BenchShard:
    """Environments ``lo .. hi-1``, stepped through the kernel with preallocated buffers."""

    def __init__(self, cfg: EnvConfig, store: MessageStore, episodes: int, lo: int, hi: int,
                 total: int, seed: int, max_steps: int):
        index = build_episode_index(store, cfg.steps_per_episode, cfg.messages_per_step,
                                    cfg.start_stride_steps)
        if len(index) == 0:
            raise ValueError("store holds no complete episode for this setting")
        n_ep = min(episodes, len(index))
        self.env = LobEnv(cfg, store, index, hi - lo)
        E = hi - lo
        self.state = self.env.init_state(env_keys(seed, E, offset=lo))
        self.rng = np.random.default_rng([seed, lo])
        rounds = max_steps // cfg.steps_per_episode + 2
        gid = lo + np.arange(E)
        self.sched_ep = np.stack([(gid + k * total) % n_ep for k in range(rounds)])
        self.sched_start = index.starts[self.sched_ep]
        self.sched_row = np.vectorize(lambda s: store._pos[int(s)])(self.sched_start)
        self.sched_row = self.sched_row.astype(np.int64)
        self.env_ids = np.arange(E, dtype=np.int64)
        self.round = 0
        A = self.env.layout.n_agents
        self.u = np.zeros((E, max(A, 1)))
        self.act = np.zeros((E, max(A, 1)), dtype=np.int64)
        self.arity = np.ones(max(A, 1))
        self.arity[:A] = self.env.layout.arity
        self._reset_all()

    def _reset_all(self):
        k = self.round
        s, env = self.state, self.env
        EK.reset_kernel(self.env_ids, self.sched_row[k], self.sched_start[k], self.sched_ep[k],
                        s.orders, s.counts, s.meta, env.store.state_bids, env.store.state_asks,
                        env.store.messages, s.start, s.step, s.rcount, s.keys, s.mid,
                        s.prev_mid, s.mid_sum, s.n_proc, s.last_bid, s.last_ask, s.inv,
                        s.inv_prev, s.cash, s.task_rem, s.direction, s.id_next, s.bq, s.bn,
                        s.sq, s.sn, s.tot_q, s.tot_n, s.p_init, s.episode, env.layout.ip,
                        SYNTH_ID_BASE)
        self.round += 1

    def steps(self, n: int) -> int:
        """Advance every environment ``n`` steps; returns env-steps done."""
        env, s, cfg = self.env, self.state, self.env.cfg
        lay = env.layout
        for _ in range(n):
            self.rng.random(out=self.u)
            _scale_actions(self.u, self.arity, self.act)
            EK.step_kernel(
                s.orders, s.counts, s.meta, env.store.messages, cfg.messages_per_step,
                cfg.steps_per_episode, s.start, s.step, s.rcount, s.keys, s.mid, s.prev_mid,
                s.mid_sum, s.n_proc, s.last_bid, s.last_ask, s.inv, s.inv_prev, s.cash,
                s.task_rem, s.direction, s.id_next, s.bq, s.bn, s.sq, s.sn, s.tot_q, s.tot_n,
                self.act, env._no_override, env._override, lay.ip, lay.fp, lay.fq, lay.ss,
                lay.gamma, lay.mult, lay.n_mult, cfg.allow_self_trade, cfg.protect_agent_orders,
                env._buf, env._trades, env._new, False, env._rec, env._rec_n)
            # every env starts together, so they all finish on the same step
            if s.step[0] >= cfg.steps_per_episode:
                self._reset_all()
        return n * env.n_envs

    def processed(self) -> int:
        return int(self.state.n_proc.sum())


class _Pool:
    def __init__(self, factories):
        self._local = None
        self._conns, self._procs = [], []
        if len(factories) == 1:
            self._local = factories[0]()
            return
        ctx = mp.get_context("fork")
        for f in factories:
            parent, child = ctx.Pipe()
            p = ctx.Process(target=_worker, args=(child, f), daemon=True)
            p.start()
            child.close()
            self._conns.append(parent)
            self._procs.append(p)

    def timed(self, method, *args):
        if self._local is not None:
            t0 = time.perf_counter()
            res = getattr(self._local, method)(*args)
            return [(res, time.perf_counter() - t0)]
        for c in self._conns:
            c.send(("timed", (method, *args)))
        out = []
        for c in self._conns:
            status, res = c.recv()
            if status != "ok":
                raise WorkerError(res)
            out.append(res)
        return out

    def close(self):
        for c in self._conns:
            try:
                c.send(("close", ()))
            except (BrokenPipeError, OSError):
                pass
        for p in self._procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()
        self._conns, self._procs = [], []


def run_throughput(env_cfg: EnvConfig, store: MessageStore, n_envs: int, n_steps: int,
                   n_agents_per_type: int, messages_per_step: int, workers: int = 1,
                   warmup: int = 5, data_episodes: int = 16, seed: int = 0) -> BenchRow:
    """Time ``n_steps`` random-action steps of ``n_envs`` environments (warm-up excluded)."""
    cfg = env_for(env_cfg, messages_per_step, n_agents_per_type)
    ranges = split_ranges(n_envs, workers)
    total_steps = warmup + n_steps

    def factory(lo, hi):
        return lambda: BenchShard(cfg, store, data_episodes, lo, hi, n_envs, seed, total_steps)

    pool = _Pool([factory(lo, hi) for lo, hi in ranges])
    try:
        if warmup:
            pool.timed("steps", warmup)
        t0 = time.perf_counter()
        res = pool.timed("steps", n_steps)
        wall = time.perf_counter() - t0
    finally:
        pool.close()
    done = sum(r for r, _ in res)
    busy = [b for _, b in res]
    return BenchRow(
        messages_per_step=messages_per_step, agents_per_type=n_agents_per_type,
        n_agents=n_agents_per_type * len(cfg.agents), n_envs=n_envs, n_steps=n_steps,
        workers=len(ranges), wall_s=wall, steps_per_s=done / wall,
        msgs_per_s=done * messages_per_step / wall,
        utilization=float(np.mean(busy) / wall) if wall > 0 else 0.0, worker_busy_s=busy)


def run_grid(run_cfg: RunConfig, store: MessageStore | None = None,
             bench: BenchConfig | None = None, log=None) -> list[BenchRow]:
    """Every (messages_per_step, agents_per_type, workers) combination of the bench config."""
    b = bench or run_cfg.bench
    store = store if store is not None else load_store(run_cfg.data)
    rows = []
    for m in b.messages_per_step:
        for k in b.agents_per_type:
            base = None
            for w in b.workers:
                row = run_throughput(run_cfg.env, store, b.n_envs, b.n_steps, k, m, w,
                                     b.warmup_steps, b.data_episodes, b.seed)
                if row.workers == 1:
                    base = row.steps_per_s
                if base:
                    row.speedup = row.steps_per_s / base
                    row.efficiency = row.speedup / row.workers
                rows.append(row)
                if log is not None:
                    log(row)
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow(["" if d[c] is None else (f"{d[c]:.6g}" if isinstance(d[c], float) else d[c])
                    for c in COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: list[BenchRow]) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2, sort_keys=True)


def summary(rows: list[BenchRow]) -> str:
    lines = [f"{'msgs/step':>9} {'agents/type':>11} {'workers':>7} {'steps/s':>12} "
             f"{'msgs/s':>12} {'util':>5} {'speedup':>7}"]
    for r in rows:
        sp = "" if r.speedup is None else f"{r.speedup:.2f}"
        lines.append(f"{r.messages_per_step:>9} {r.agents_per_type:>11} {r.workers:>7} "
                     f"{r.steps_per_s:>12.0f} {r.msgs_per_s:>12.0f} {r.utilization:>5.2f} "
                     f"{sp:>7}")
    return "\n".join(lines)


def run_rl_throughput(run_cfg: RunConfig, n_steps: int = 32, workers: int = 1,
                      store: MessageStore | None = None, updates: int = 2) -> list[dict]:
    """Env-steps/s with random actions, with learned-network inference and while training.

    The first two rows step ``LobVecEnv`` with full observations and
    rewards; the ``train`` row runs ``updates`` IPPO updates and divides the
    env-steps collected by the total time including the updates.
    """
    from .ippo import network as net
    from .ippo.policy import LearnedPolicy, RandomPolicy
    from .ippo.rollout import LobVecEnv
    from .ippo.train import train_loop

    tc = run_cfg.train
    store = store if store is not None else load_store(run_cfg.data)
    index = build_episode_index(store, run_cfg.env.steps_per_episode,
                                run_cfg.env.messages_per_step, run_cfg.env.start_stride_steps)
    E = tc.num_envs
    out = []
    with LobVecEnv(run_cfg.env, store, index, E, tc.seed, workers=workers) as venv:
        rng = np.random.default_rng(tc.seed)
        for mode in ("random", "learned"):
            pols = {}
            for gi, g in enumerate(venv.groups):
                if mode == "random":
                    pols[g.name] = RandomPolicy(g.n_actions)
                else:
                    p = net.init_params(g.obs_dim, g.n_actions, tc.hidden_size,
                                        np.random.default_rng([tc.seed, gi]))
                    pols[g.name] = LearnedPolicy(p, greedy=False)
            obs = venv.reset()
            hidden = {g.name: pols[g.name].initial_hidden(E * g.count) for g in venv.groups}
            resets = {g.name: np.ones(E * g.count) for g in venv.groups}
            t0 = time.perf_counter()
            for _ in range(n_steps):
                acts = {}
                for g in venv.groups:
                    a, _, _, hidden[g.name] = pols[g.name].act(obs[g.name], hidden[g.name],
                                                               resets[g.name], rng)
                    acts[g.name] = a
                st = venv.step(acts)
                for g in venv.groups:
                    resets[g.name] = np.repeat(st.dones.astype(float), g.count)
                obs = st.obs
            wall = time.perf_counter() - t0
            out.append({"mode": mode, "n_envs": E, "env_steps": E * n_steps, "wall_s": wall,
                        "steps_per_s": E * n_steps / wall, "workers": venv.workers})
    tcfg = tc.model_copy(update={"updates": updates})
    with LobVecEnv(run_cfg.env, store, index, E, tc.seed, workers=workers) as venv:
        t0 = time.perf_counter()
        res = train_loop(venv, tcfg)
        wall = time.perf_counter() - t0
    steps = res.updates * tcfg.rollout_length * E
    out.append({"mode": "train", "n_envs": E, "env_steps": steps, "wall_s": wall,
                "steps_per_s": steps / wall, "workers": workers})
    return out


def monotone_decreasing(values) -> bool:
    v = list(values)
    return all(a > b for a, b in zip(v, v[1:])) and all(math.isfinite(x) for x in v)
