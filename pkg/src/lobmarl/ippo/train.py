"""Independent PPO over heterogeneous agent groups.

Each agent group (one entry of ``EnvConfig.agents``) owns a network, an
optimiser and three random streams (initialisation, action sampling and
minibatch shuffling) seeded from ``(seed, group index, purpose)``. Nothing
is shared between groups, so one group's parameter trajectory depends on
the others only through what the environment shows it.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import yaml

from ..config import RunConfig, TrainConfig, config_hash, config_to_dict
from ..data.loader import load_dataset
from . import network as net
from .checkpoint import save_checkpoint
from .evaluate import run_episodes
from .gae import compute_gae
from .policy import LearnedPolicy, ScriptedPolicy, sample_categorical
from .ppo import Batch, ppo_update
from .rollout import LobVecEnv

INIT, SAMPLE, UPDATE = 0, 1, 2


class TrainResult(NamedTuple):
    params: dict
    opts: dict
    metrics: list
    updates: int


def group_rngs(seed: int, gi: int) -> dict:
    return {k: np.random.default_rng([seed, gi, p])
            for k, p in (("init", INIT), ("sample", SAMPLE), ("update", UPDATE))}


def _finite(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def train_loop(venv, cfg: TrainConfig, *, scripted: dict | None = None,
               evaluate_fn: Callable | None = None,
               on_metrics: Callable | None = None,
               on_update: Callable | None = None,
               stop_fn: Callable | None = None,
               init_params: dict | None = None) -> TrainResult:
    """Collect ``rollout_length`` steps from every env, then update each learning group in turn.

    ``scripted`` maps group names to scripted-policy descriptors; those
    groups act but do not learn. ``evaluate_fn(params, update)`` returns a
    dict merged into that update's record. ``stop_fn(record)`` ends training
    early when it returns true.
    """
    scripted = dict(scripted or {})
    E, T = venv.n_envs, cfg.rollout_length
    groups = [g for g in venv.groups if g.name not in scripted]
    rngs = {g.name: group_rngs(cfg.seed, gi) for gi, g in enumerate(venv.groups)}
    params, opts = {}, {}
    for g in groups:
        if init_params and g.name in init_params:
            params[g.name] = {k: v.copy() for k, v in init_params[g.name].items()}
        else:
            params[g.name] = net.init_params(g.obs_dim, g.n_actions, cfg.hidden_size,
                                             rngs[g.name]["init"])
        opts[g.name] = net.Adam(params[g.name], cfg.lr)
    N = {g.name: E * g.count for g in venv.groups}
    scale = {g.name: float(cfg.reward_scale.get(g.name, 1.0)) for g in venv.groups}
    unknown = set(cfg.reward_scale) - {g.name for g in venv.groups}
    if unknown:
        raise ValueError(f"reward_scale names unknown agent groups: {sorted(unknown)}")

    obs = venv.reset()
    h = {g.name: np.zeros((N[g.name], cfg.hidden_size)) for g in groups}
    resets = {g.name: np.ones(N[g.name]) for g in groups}
    ep_ret = {g.name: np.zeros((E, g.count)) for g in venv.groups}
    history = []
    u = 0
    for u in range(cfg.updates):
        buf = {}
        for g in groups:
            n, D = N[g.name], g.obs_dim
            buf[g.name] = {
                "obs": np.zeros((T, n, D)), "actions": np.zeros((T, n), dtype=np.int64),
                "logp": np.zeros((T, n)), "values": np.zeros((T, n)), "rewards": np.zeros((T, n)),
                "dones": np.zeros((T, n)), "resets": np.zeros((T, n)), "h0": h[g.name].copy(),
            }
        finished = {g.name: {} for g in venv.groups}
        for t in range(T):
            actions = {}
            for g in venv.groups:
                if g.name in scripted:
                    actions[g.name] = np.zeros((E, g.count), dtype=np.int64)
                    continue
                b = buf[g.name]
                x = obs[g.name].reshape(N[g.name], g.obs_dim)
                logits, values, h[g.name] = net.forward(params[g.name], x[None], h[g.name],
                                                        resets[g.name][None])
                a = sample_categorical(logits[0], rngs[g.name]["sample"])
                b["obs"][t] = x
                b["actions"][t] = a
                b["logp"][t] = np.take_along_axis(net.log_softmax(logits[0]), a[:, None], -1)[:, 0]
                b["values"][t] = values[0]
                b["resets"][t] = resets[g.name]
                actions[g.name] = a.reshape(E, g.count)
            st = venv.step(actions, scripted)
            done = np.asarray(st.dones, dtype=bool)
            for g in venv.groups:
                r = np.asarray(st.rewards[g.name], dtype=np.float64)
                ep_ret[g.name] += r
                if g.name not in scripted:
                    d = np.repeat(done, g.count).astype(np.float64)
                    buf[g.name]["rewards"][t] = r.reshape(-1) * scale[g.name]
                    buf[g.name]["dones"][t] = d
                    resets[g.name] = d
                if done.any():
                    f = finished[g.name]
                    f.setdefault("return", []).append(ep_ret[g.name][done])
                    for key, v in st.terminal.get(g.name, {}).items():
                        f.setdefault(key, []).append(np.asarray(v)[done])
                    ep_ret[g.name][done] = 0.0
            obs = st.obs

        record = {"update": u + 1, "env_steps": (u + 1) * T * E}
        for g in groups:
            b = buf[g.name]
            x = obs[g.name].reshape(N[g.name], g.obs_dim)
            _, last_v, _ = net.forward(params[g.name], x[None], h[g.name], resets[g.name][None])
            adv, ret = compute_gae(b["rewards"], b["values"], b["dones"], cfg.gamma,
                                   cfg.gae_lambda, last_v[0])
            batch = Batch(b["obs"], b["actions"], b["logp"], b["values"], adv, ret,
                          b["resets"], b["h0"])
            m = ppo_update(params[g.name], opts[g.name], batch, epochs=cfg.epochs,
                           minibatches=cfg.minibatches, clip_eps=cfg.clip_eps,
                           vf_coef=cfg.vf_coef, ent_coef=cfg.ent_coef,
                           max_grad_norm=cfg.max_grad_norm, rng=rngs[g.name]["update"])
            for key, v in m.items():
                record[f"{g.name}/{key}"] = _finite(v)
            record[f"{g.name}/rollout_reward"] = _finite(b["rewards"].mean() / scale[g.name])
        for g in venv.groups:
            f = finished[g.name]
            record[f"{g.name}/episodes"] = int(sum(len(v) for v in f.get("return", [])))
            for key, parts in f.items():
                vals = np.concatenate(parts).astype(np.float64)
                if vals.size:
                    record[f"{g.name}/episode_{key}"] = _finite(vals.mean())
        last = u + 1 == cfg.updates
        stop = False
        if evaluate_fn is not None and (last or (cfg.eval_interval and (u + 1) % cfg.eval_interval == 0)):
            record.update(evaluate_fn(params, u + 1))
        if stop_fn is not None and stop_fn(record):
            stop = True
        history.append(record)
        if on_metrics is not None:
            on_metrics(record)
        if on_update is not None:
            on_update(u + 1, params, opts)
        if stop:
            break
    return TrainResult(params, opts, history, u + 1)


def make_eval_fn(run_cfg: RunConfig, store, index, episodes, workers: int = 1,
                 scripted: dict | None = None) -> Callable:
    """Greedy evaluation of the current networks on held-out episodes."""
    episodes = np.asarray(episodes, dtype=np.int64)
    scripted = scripted or {}

    def evaluate(params: dict, update: int) -> dict:
        pols = {}
        for a in run_cfg.env.agents:
            if a.name in scripted:
                pols[a.name] = ScriptedPolicy(scripted[a.name])
            else:
                pols[a.name] = LearnedPolicy(params[a.name], greedy=True)
        res = run_episodes(run_cfg.env, store, index, episodes, pols, run_cfg.eval.seed, workers)
        out = {}
        for a in run_cfg.env.agents:
            r = res[a.name]
            out[f"eval/{a.name}/return"] = _finite(r["return"].mean())
            out[f"eval/{a.name}/portfolio_value"] = _finite(r["portfolio_value"].mean())
            out[f"eval/{a.name}/inventory_sq"] = _finite((r["inventory"].astype(float) ** 2).mean())
            if a.type.value == "executor":
                task = a.params.task_size
                out[f"eval/{a.name}/slippage"] = _finite(r["slippage"].mean())
                out[f"eval/{a.name}/completion"] = _finite(
                    1.0 - r["task_remaining"].mean() / task if task else 1.0)
        return out

    return evaluate


def train(run_cfg: RunConfig, out_dir, workers: int | None = None,
          scripted: dict | None = None, stop_fn: Callable | None = None,
          log: Callable | None = None) -> TrainResult:
    """Train on the configured data; writes config.yaml, metrics.jsonl and checkpoints to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tc = run_cfg.train
    workers = workers or tc.workers
    cfg_dict = config_to_dict(run_cfg)
    chash = config_hash(run_cfg)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg_dict, sort_keys=True))
    ds = load_dataset(run_cfg.data, run_cfg.env)
    eval_fn = None
    if len(ds.eval_episodes):
        eval_fn = make_eval_fn(run_cfg, ds.store, ds.index, ds.eval_episodes[: tc.eval_episodes],
                               workers, scripted)
    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text("")
    latest = {"params": None, "opts": None, "update": 0}

    def on_metrics(record):
        with open(metrics_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        if log is not None:
            log(record)

    with LobVecEnv(run_cfg.env, ds.store, ds.index, tc.num_envs, tc.seed,
                   episodes=ds.train_episodes, workers=workers) as venv:
        groups = [g for g in venv.groups if not scripted or g.name not in scripted]

        def on_update(update, params, opts):
            latest.update(params=params, opts=opts, update=update)
            if tc.checkpoint_interval and update % tc.checkpoint_interval == 0:
                save_checkpoint(out / "checkpoints" / f"update_{update:05d}.npz", params, opts,
                                groups, config=cfg_dict, config_hash=chash, update=update)

        try:
            res = train_loop(venv, tc, scripted=scripted, evaluate_fn=eval_fn,
                             on_metrics=on_metrics, on_update=on_update, stop_fn=stop_fn)
        except BaseException:
            if latest["params"] is not None:
                save_checkpoint(out / "checkpoint_failed.npz", latest["params"], latest["opts"],
                                groups, config=cfg_dict, config_hash=chash,
                                update=latest["update"])
            raise
        save_checkpoint(out / "checkpoint.npz", res.params, res.opts, groups,
                        config=cfg_dict, config_hash=chash, update=res.updates)
    return res
