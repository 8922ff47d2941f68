"""Vectorised environments for the trainer and the rollout workers behind them.

Any object with ``groups``, ``n_envs``, ``reset()``, ``step(actions, scripted)``
and ``close()`` can be trained on. :class:`LobVecEnv` shards its
environments over worker processes: shard ``k`` owns a contiguous range of
global env indices and derives each env's RNG key from ``(seed, env
index)``, and results are concatenated in env order, so outputs do not
depend on the number of workers. Environments auto-reset when their episode
ends, cycling their episode list round-robin: env ``i`` plays
``episodes[(i + k * n_envs) % len(episodes)]`` as its ``k``-th episode.
"""
from __future__ import annotations

import multiprocessing as mp
import os
import time
from typing import NamedTuple

import numpy as np

from .. import baselines
from ..config import EnvConfig
from ..data.store import EpisodeIndex, MessageStore
from ..env.core import LobEnv
from ..env.rng import env_keys

TERMINAL_FIELDS = ("portfolio_value", "slippage", "task_remaining", "inventory", "filled")


class GroupInfo(NamedTuple):
    name: str
    count: int
    obs_dim: int
    n_actions: int
    kind: str  # "market_maker", "executor", "directional" or "other"


class VecStep(NamedTuple):
    obs: dict          # name -> [E, n, D] (already reset where done)
    rewards: dict      # name -> [E, n]
    dones: np.ndarray  # [E] bool, episode ended with this step
    terminal: dict     # name -> {field: [E, n]} at the end of this step, before any reset


# -- scripted policies -----------------------------------------------------------
def scripted_orders(env: LobEnv, state, name: str, descriptor):
    """Override rows for a scripted policy: ("twap", plan) | ("avst", gamma) | ("noop",)."""
    g = env.layout.group(name)
    kind = descriptor[0]
    if kind == "twap":
        return baselines.twap_orders(env, state, g, descriptor[1])
    if kind == "avst":
        return baselines.avst_orders(env, state, g, descriptor[1])
    if kind == "noop":
        return (np.ones((state.n_envs, g.count), dtype=bool),
                np.zeros((state.n_envs, g.count, 2, 3), dtype=np.int64))
    raise ValueError(f"unknown scripted policy {kind!r}")


class EnvShard:
    """Environments ``lo .. hi-1`` of a vectorised LOB environment."""

    def __init__(self, cfg: EnvConfig, store: MessageStore, index: EpisodeIndex,
                 episodes, lo: int, hi: int, total: int, seed: int):
        self.env = LobEnv(cfg, store, index, hi - lo)
        self.lo, self.total = lo, total
        self.episodes = np.asarray(episodes, dtype=np.int64)
        self.state = self.env.init_state(env_keys(seed, hi - lo, offset=lo))
        self.plays = np.zeros(hi - lo, dtype=np.int64)

    def _next_episodes(self, ids: np.ndarray) -> np.ndarray:
        gid = self.lo + ids
        ep = self.episodes[(gid + self.plays[ids] * self.total) % len(self.episodes)]
        self.plays[ids] += 1
        return ep

    def reset(self):
        ids = np.arange(self.env.n_envs)
        self.env.reset_envs(self.state, ids, self._next_episodes(ids))
        return self.env.observations(self.state)

    def step(self, actions: dict, scripted: dict | None = None) -> VecStep:
        orders = None
        if scripted:
            orders = {n: scripted_orders(self.env, self.state, n, d) for n, d in scripted.items()}
        out = self.env.step_inplace(self.state, actions, orders)
        done = self.state.step >= self.env.cfg.steps_per_episode
        terminal = {}
        for g in self.env.groups:
            terminal[g.name] = {f: np.asarray(out.infos[f])[:, g.cols] for f in TERMINAL_FIELDS}
        obs = out.observations
        if done.any():
            ids = np.flatnonzero(done)
            self.env.reset_envs(self.state, ids, self._next_episodes(ids))
            fresh = self.env.observations(self.state)
            for name in obs:
                obs[name][ids] = fresh[name][ids]
        return VecStep(obs, out.rewards, done, terminal)

    def random_steps(self, n_steps: int, seed: int) -> int:
        """Step with uniformly random actions (throughput runs); returns env-steps done."""
        rng = np.random.default_rng([seed, self.lo])
        ar = self.env.layout.arity
        E = self.env.n_envs
        for _ in range(n_steps):
            act = (rng.random((E, len(ar))) * ar).astype(np.int64)
            self.env.step_inplace(self.state, act)
            done = self.state.step >= self.env.cfg.steps_per_episode
            if done.any():
                ids = np.flatnonzero(done)
                self.env.reset_envs(self.state, ids, self._next_episodes(ids))
        return n_steps * E


def _worker(conn, factory):
    shard = factory()
    try:
        while True:
            cmd, args = conn.recv()
            if cmd == "close":
                break
            try:
                if cmd == "timed":
                    t0 = time.perf_counter()
                    res = getattr(shard, args[0])(*args[1:])
                    res = (res, time.perf_counter() - t0)
                else:
                    res = getattr(shard, cmd)(*args)
                conn.send(("ok", res))
            except Exception as exc:  # forwarded to the parent
                conn.send(("err", repr(exc)))
    finally:
        conn.close()


class WorkerError(RuntimeError):
    pass


def split_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def available_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


class LobVecEnv:
    """``n_envs`` LOB environments, stepped in-process or by ``workers`` forked processes."""

    def __init__(self, cfg: EnvConfig, store: MessageStore, index: EpisodeIndex, n_envs: int,
                 seed: int, episodes=None, workers: int = 1):
        self.cfg = cfg
        self.n_envs = n_envs
        eps = np.arange(len(index)) if episodes is None else np.asarray(episodes)
        if len(eps) == 0:
            raise ValueError("no episodes to play")
        probe = LobEnv(cfg, store, index, 1)
        self.groups = [GroupInfo(g.name, g.count, g.obs_dim, g.arity, g.spec.type.value)
                       for g in probe.groups]
        self.layout = probe.layout
        self.ranges = split_ranges(n_envs, workers)

        def factory(lo, hi):
            return lambda: EnvShard(cfg, store, index, eps, lo, hi, n_envs, seed)

        self._local = None
        self._procs = []
        self._conns = []
        if len(self.ranges) == 1:
            self._local = factory(0, n_envs)()
        else:
            ctx = mp.get_context("fork")
            for lo, hi in self.ranges:
                parent, child = ctx.Pipe()
                p = ctx.Process(target=_worker, args=(child, factory(lo, hi)), daemon=True)
                p.start()
                child.close()
                self._procs.append(p)
                self._conns.append(parent)

    @property
    def workers(self) -> int:
        return len(self.ranges)

    def _call(self, cmd, per_shard_args):
        if self._local is not None:
            return [getattr(self._local, cmd)(*per_shard_args[0])]
        for c, a in zip(self._conns, per_shard_args):
            c.send((cmd, a))
        out = []
        for c in self._conns:
            status, res = c.recv()
            if status != "ok":
                raise WorkerError(res)
            out.append(res)
        return out

    def timed(self, method: str, *args):
        """Run ``method`` on every shard; returns [(result, seconds)] per shard."""
        if self._local is not None:
            t0 = time.perf_counter()
            res = getattr(self._local, method)(*args)
            return [(res, time.perf_counter() - t0)]
        return self._call("timed", [(method, *args)] * len(self.ranges))

    def _slice(self, d: dict, lo: int, hi: int) -> dict:
        return {k: v[lo:hi] for k, v in d.items()}

    def reset(self) -> dict:
        parts = self._call("reset", [()] * len(self.ranges))
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}

    def step(self, actions: dict, scripted: dict | None = None) -> VecStep:
        args = [(self._slice(actions, lo, hi), scripted) for lo, hi in self.ranges]
        parts = self._call("step", args)
        if len(parts) == 1:
            return parts[0]
        cat = lambda key: {k: np.concatenate([getattr(p, key)[k] for p in parts])  # noqa: E731
                           for k in getattr(parts[0], key)}
        terminal = {n: {f: np.concatenate([p.terminal[n][f] for p in parts])
                        for f in parts[0].terminal[n]} for n in parts[0].terminal}
        return VecStep(cat("obs"), cat("rewards"), np.concatenate([p.dones for p in parts]),
                       terminal)

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

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BanditVecEnv:
    """Single-group control task: reward 1 for action 0, else 0; constant observation."""

    def __init__(self, n_envs: int = 16, n_actions: int = 4, episode_length: int = 8,
                 obs_dim: int = 3):
        self.n_envs = n_envs
        self.groups = [GroupInfo("bandit", 1, obs_dim, n_actions, "other")]
        self.T = episode_length
        self.t = 0

    def _obs(self):
        return {"bandit": np.ones((self.n_envs, 1, self.groups[0].obs_dim))}

    def reset(self):
        self.t = 0
        return self._obs()

    def step(self, actions: dict, scripted=None) -> VecStep:
        a = np.asarray(actions["bandit"]).reshape(self.n_envs, 1)
        self.t += 1
        done = np.full(self.n_envs, self.t >= self.T)
        if self.t >= self.T:
            self.t = 0
        return VecStep(self._obs(), {"bandit": (a == 0).astype(np.float64)}, done, {})

    def close(self):
        pass
