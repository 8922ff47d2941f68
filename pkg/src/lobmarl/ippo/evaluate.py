"""Held-out evaluation and the executor x market-maker cross-play matrix."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ..baselines import TwapPlan
from ..config import EnvConfig, EvalConfig
from ..data.store import EpisodeIndex, MessageStore
from .checkpoint import CheckpointError, group_descriptor, load_checkpoint
from .policy import LearnedPolicy, RandomPolicy, ScriptedPolicy
from .rollout import LobVecEnv


class PolicyError(ValueError):
    pass


def resolve_policy(spec: str, group, env_cfg: EnvConfig, eval_cfg: EvalConfig,
                   cache: dict | None = None):
    """Policy for ``group`` from ``twap | avst | noop | random | learned:<checkpoint>``."""
    p = group.spec.params
    if spec == "twap":
        if not group.is_exec:
            raise PolicyError(f"twap needs an executor group, {group.name!r} is not one")
        return ScriptedPolicy(("twap", TwapPlan.even(p.task_size, env_cfg.steps_per_episode,
                                                     eval_cfg.twap_mode)))
    if spec == "avst":
        if group.is_exec:
            raise PolicyError(f"avst needs a market-making group, {group.name!r} is an executor")
        grid = p.avst.gamma_grid
        if not 0 <= eval_cfg.avst_gamma_index < len(grid):
            raise PolicyError(f"avst_gamma_index {eval_cfg.avst_gamma_index} outside the grid")
        return ScriptedPolicy(("avst", float(grid[eval_cfg.avst_gamma_index])))
    if spec == "noop":
        return ScriptedPolicy(("noop",))
    if spec == "random":
        return RandomPolicy(group.arity)
    if spec.startswith("learned:"):
        path = spec.split(":", 1)[1]
        cache = {} if cache is None else cache
        try:
            if path not in cache:
                cache[path] = load_checkpoint(path)
            header, params = cache[path]
            desc = group_descriptor(header, group.name)
        except (CheckpointError, FileNotFoundError) as exc:
            raise PolicyError(str(exc)) from None
        if desc["obs_dim"] != group.obs_dim or desc["n_actions"] != group.arity:
            raise PolicyError(
                f"checkpoint group {group.name!r} has obs_dim {desc['obs_dim']} / "
                f"{desc['n_actions']} actions; config expects {group.obs_dim} / {group.arity}")
        return LearnedPolicy(params[group.name], greedy=True)
    raise PolicyError(f"unknown policy {spec!r}")


def run_episodes(env_cfg: EnvConfig, store: MessageStore, index: EpisodeIndex, episodes,
                 policies: dict, seed: int, workers: int = 1) -> dict:
    """Play each episode once (one env per episode); terminal stats per group ``[n_ep, count]``.

    Adds ``return`` (undiscounted episode reward) to the terminal fields.
    """
    episodes = np.asarray(episodes, dtype=np.int64)
    E = len(episodes)
    venv = LobVecEnv(env_cfg, store, index, E, seed, episodes=episodes, workers=workers)
    try:
        obs = venv.reset()
        rng = np.random.default_rng([seed, 7])
        hidden = {g.name: policies[g.name].initial_hidden(E * g.count) for g in venv.groups}
        resets = {g.name: np.ones(E * g.count) for g in venv.groups}
        ret = {g.name: np.zeros((E, g.count)) for g in venv.groups}
        for _ in range(env_cfg.steps_per_episode):
            actions, scripted = {}, {}
            for g in venv.groups:
                pol = policies[g.name]
                if pol.scripted is not None:
                    scripted[g.name] = pol.scripted
                    actions[g.name] = np.zeros((E, g.count), dtype=np.int64)
                else:
                    a, _, _, hidden[g.name] = pol.act(obs[g.name], hidden[g.name],
                                                      resets[g.name], rng)
                    actions[g.name] = a
                resets[g.name] = np.zeros(E * g.count)
            st = venv.step(actions, scripted)
            for g in venv.groups:
                ret[g.name] += st.rewards[g.name]
            obs = st.obs
        out = {}
        for g in venv.groups:
            out[g.name] = dict(st.terminal[g.name])
            out[g.name]["return"] = ret[g.name]
        return out
    finally:
        venv.close()


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        return 0.0, 0.0
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(x.mean()), se


def _paired(a: np.ndarray, b: np.ndarray) -> dict:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    mean, se = _mean_se(d)
    if len(d) > 1 and np.any(d != d[0]):
        res = stats.ttest_rel(a, b)
        t, p = float(res.statistic), float(res.pvalue)
    else:
        t, p = 0.0, 1.0
    return {"mean_diff": mean, "se_diff": se, "t": t, "p_value": p, "n": int(len(d))}


def evaluate_matrix(env_cfg: EnvConfig, store: MessageStore, index: EpisodeIndex,
                    exec_policies: list[str], mm_policies: list[str], episodes,
                    eval_cfg: EvalConfig | None = None, workers: int = 1) -> dict:
    """Cross-play grid: executor policy (rows) x market-maker policy (columns).

    Every cell plays the same episodes with the same seeds. Per cell: mean
    and standard error of the market maker's terminal portfolio value and of
    the executor's slippage, executor completion and a ``zero_fills`` flag
    when the executor never traded. Paired t-tests compare neighbouring
    cells of each row and column on the per-episode values.
    """
    from ..env.core import EnvLayout

    eval_cfg = eval_cfg or EvalConfig()
    layout = EnvLayout(env_cfg)
    ex = [g for g in layout.groups if g.is_exec]
    mm = [g for g in layout.groups if not g.is_exec]
    if not ex or not mm:
        raise PolicyError("the cross-play matrix needs an executor and a market-making group")
    ex_g, mm_g = ex[0], mm[0]
    cache: dict = {}
    episodes = np.asarray(episodes, dtype=np.int64)
    cells = []
    raw = {}
    for i, ep_spec in enumerate(exec_policies):
        for j, mm_spec in enumerate(mm_policies):
            pols = {g.name: resolve_policy("noop", g, env_cfg, eval_cfg) for g in layout.groups}
            pols[ex_g.name] = resolve_policy(ep_spec, ex_g, env_cfg, eval_cfg, cache)
            pols[mm_g.name] = resolve_policy(mm_spec, mm_g, env_cfg, eval_cfg, cache)
            res = run_episodes(env_cfg, store, index, episodes, pols, eval_cfg.seed, workers)
            pv = res[mm_g.name]["portfolio_value"].mean(axis=1)
            slip = res[ex_g.name]["slippage"].mean(axis=1)
            filled = res[ex_g.name]["filled"].sum(axis=1)
            task = ex_g.spec.params.task_size
            done = 1.0 - res[ex_g.name]["task_remaining"].mean(axis=1) / task if task else \
                np.ones(len(episodes))
            raw[(i, j)] = {"pv": pv, "slippage": slip}
            cells.append({
                "row": i, "col": j, "executor_policy": ep_spec, "mm_policy": mm_spec,
                "mm_pv_mean": _mean_se(pv)[0], "mm_pv_se": _mean_se(pv)[1],
                "exec_slippage_mean": _mean_se(slip)[0], "exec_slippage_se": _mean_se(slip)[1],
                "exec_completion_mean": float(done.mean()),
                "exec_filled_min": int(filled.min()), "exec_filled_max": int(filled.max()),
                "zero_fills": bool(np.all(filled == 0)),
                "episodes": int(len(episodes)),
                "per_episode": {"mm_pv": pv.tolist(), "exec_slippage": slip.tolist(),
                                "exec_filled": filled.tolist()},
            })
    paired = []
    nr, nc = len(exec_policies), len(mm_policies)
    for i in range(nr):
        for j in range(nc):
            for di, dj in ((0, 1), (1, 0)):
                i2, j2 = i + di, j + dj
                if i2 < nr and j2 < nc:
                    for metric in ("pv", "slippage"):
                        paired.append({"a": [i, j], "b": [i2, j2], "metric": metric,
                                       **_paired(raw[(i, j)][metric], raw[(i2, j2)][metric])})
    return {
        "rows": list(exec_policies), "cols": list(mm_policies),
        "executor_group": ex_g.name, "mm_group": mm_g.name,
        "episodes": episodes.tolist(), "seed": eval_cfg.seed,
        "avst": {"gamma": float(mm_g.spec.params.avst.gamma_grid[eval_cfg.avst_gamma_index])
                 if eval_cfg.avst_gamma_index < len(mm_g.spec.params.avst.gamma_grid) else None,
                 "sigma": mm_g.spec.params.avst.sigma, "kappa": mm_g.spec.params.avst.kappa,
                 "horizon": mm_g.spec.params.avst.horizon},
        "twap_mode": eval_cfg.twap_mode,
        "cells": cells, "paired": paired,
    }
