"""Command-line entry point: ``lobmarl {train,evaluate,bench,replay,inspect}``.

Every command takes ``--config FILE`` and repeatable ``--override key.path=value``
(values parsed as YAML) and prints the resolved config hash first. Dataset
paths may also come from ``LOBMARL_MESSAGE_PATH`` / ``LOBMARL_ORDERBOOK_PATH``.
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml
from pydantic import ValidationError

from .config import RunConfig, config_hash, config_to_dict, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
ENV_PATHS = {"LOBMARL_MESSAGE_PATH": "data.message_path",
             "LOBMARL_ORDERBOOK_PATH": "data.orderbook_path"}


class ConfigError(Exception):
    pass


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def resolve_config(args) -> RunConfig:
    env_paths = {key: os.environ[var] for var, key in ENV_PATHS.items() if os.environ.get(var)}
    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"train.seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"train.workers={args.workers}")
    try:
        cfg = load_config(args.config, overrides, env_paths)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {exc.filename}") from None
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.data.source == "lobster":
        for key in ("message_path", "orderbook_path"):
            path = getattr(cfg.data, key)
            if not Path(path).is_file():
                raise ConfigError(f"data.{key}: no such file {path!r}")
    return cfg


def _echo_hash(cfg: RunConfig) -> None:
    print(f"config hash: {config_hash(cfg)}", flush=True)


# -- commands --------------------------------------------------------------------
def cmd_train(args) -> int:
    from .ippo.train import train

    cfg = resolve_config(args)
    _echo_hash(cfg)
    out = Path(args.out)

    def log(rec):
        if not args.quiet:
            keys = sorted(k for k in rec if k.endswith(("/loss", "/episode_return", "/slippage",
                                                       "/portfolio_value", "/completion")))
            parts = [f"{k}={rec[k]:.4g}" for k in keys if rec[k] is not None]
            print(f"update {rec['update']}: " + " ".join(parts), flush=True)

    res = train(cfg, out, workers=cfg.train.workers, log=log)
    print(f"trained {res.updates} updates; wrote {out / 'checkpoint.npz'} and "
          f"{out / 'metrics.jsonl'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .data.loader import load_dataset
    from .ippo.evaluate import PolicyError, evaluate_matrix

    cfg = resolve_config(args)
    _echo_hash(cfg)
    ds = load_dataset(cfg.data, cfg.env)
    episodes = ds.eval_episodes if len(ds.eval_episodes) else ds.train_episodes
    episodes = episodes[: cfg.eval.episodes]
    try:
        mat = evaluate_matrix(cfg.env, ds.store, ds.index, args.executor, args.market_maker,
                              episodes, cfg.eval, workers=cfg.train.workers)
    except PolicyError as exc:
        raise ConfigError(f"policy: {exc}") from None
    mat["config_hash"] = config_hash(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(mat, indent=2, sort_keys=True) + "\n")
    for c in mat["cells"]:
        print(f"[{c['executor_policy']} x {c['mm_policy']}] "
              f"MM PV {c['mm_pv_mean']:.2f} +- {c['mm_pv_se']:.2f}  "
              f"exec slippage {c['exec_slippage_mean']:.2f} +- {c['exec_slippage_se']:.2f}"
              f"{'  (no executor fills)' if c['zero_fills'] else ''}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import bench

    cfg = resolve_config(args)
    b = cfg.bench
    upd = {}
    if args.n_envs is not None:
        upd["n_envs"] = args.n_envs
    if args.n_steps is not None:
        upd["n_steps"] = args.n_steps
    if args.messages:
        upd["messages_per_step"] = tuple(args.messages)
    if args.agents:
        upd["agents_per_type"] = tuple(args.agents)
    if args.worker_grid:
        upd["workers"] = tuple(args.worker_grid)
    try:
        b = type(b).model_validate({**b.model_dump(), **upd})
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
    cfg = cfg.model_copy(update={"bench": b})
    _echo_hash(cfg)
    rows = bench.run_grid(cfg, bench=b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text(bench.rows_to_csv(rows))
    (out / "bench.json").write_text(bench.rows_to_json(rows) + "\n")
    text = bench.summary(rows)
    if args.rl:
        rl = bench.run_rl_throughput(cfg, workers=cfg.train.workers)
        (out / "bench_rl.json").write_text(json.dumps(rl, indent=2, sort_keys=True) + "\n")
        text += "\n\n" + "\n".join(f"{r['mode']:>8}: {r['steps_per_s']:.0f} env-steps/s"
                                   for r in rl)
    (out / "summary.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_replay(args) -> int:
    from .data.loader import load_store
    from .data.store import build_episode_index
    from .replay import format_snapshots, format_trades, replay_episode

    cfg = resolve_config(args)
    _echo_hash(cfg)
    store = load_store(cfg.data)
    index = build_episode_index(store, cfg.env.steps_per_episode, cfg.env.messages_per_step,
                                cfg.env.start_stride_steps)
    if not 0 <= args.episode < len(index):
        print(f"error: episode {args.episode} out of range [0, {len(index)})", file=sys.stderr)
        return EXIT_RUNTIME
    snaps, trades = replay_episode(cfg.env, store, index, args.episode, args.depth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"snapshots_ep{args.episode}.csv").write_text(format_snapshots(snaps))
    (out / f"trades_ep{args.episode}.csv").write_text(format_trades(trades))
    print(f"episode {args.episode}: {len(snaps)} steps, {len(trades)} trades; wrote {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .env.core import EnvLayout

    cfg = resolve_config(args)
    _echo_hash(cfg)
    layout = EnvLayout(cfg.env)
    info = {"config_hash": config_hash(cfg), "groups": []}
    for g in layout.groups:
        info["groups"].append({
            "name": g.name, "type": g.spec.type.value, "count": g.count,
            "action_space": g.spec.action_space, "n_actions": int(g.arity),
            "observation_space": g.spec.observation_space, "obs_dim": g.obs_dim,
            "observation": layout.layout(g.name, cfg.env.obs_depth),
            "reward": g.spec.reward,
        })
    if args.resolved:
        info["config"] = config_to_dict(cfg)
    print(json.dumps(info, indent=2))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lobmarl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, workers=True, out=None):
        sp.add_argument("--config", help="YAML run config (defaults apply when omitted)")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="dotted config override, repeatable")
        if seed:
            sp.add_argument("--seed", type=int, help="training seed (train.seed)")
        if workers:
            sp.add_argument("--workers", type=int, help="rollout worker processes")
        if out is not None:
            sp.add_argument("--out", default=out, help=f"output location (default {out})")

    sp = sub.add_parser("train", help="train IPPO agents")
    common(sp, out="runs/train")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="cross-play matrix of executor x market-maker policies")
    common(sp, seed=False, out="runs/eval/matrix.json")
    sp.add_argument("--executor", nargs="+", default=["twap"],
                    help="executor policies: twap, noop, random or learned:<checkpoint>")
    sp.add_argument("--market-maker", nargs="+", default=["avst"],
                    help="market-maker policies: avst, noop, random or learned:<checkpoint>")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("bench", help="throughput grid with random actions")
    common(sp, seed=False, out="runs/bench")
    sp.add_argument("--n-envs", type=int)
    sp.add_argument("--n-steps", type=int)
    sp.add_argument("--messages", type=int, nargs="+", help="messages per step grid")
    sp.add_argument("--agents", type=int, nargs="+", help="agents per type grid")
    sp.add_argument("--worker-grid", type=int, nargs="+", help="worker counts to sweep")
    sp.add_argument("--rl", action="store_true", help="also time policy inference and training")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("replay", help="zero-agent replay of one episode")
    common(sp, seed=False, workers=False, out="runs/replay")
    sp.add_argument("--episode", type=int, default=0)
    sp.add_argument("--depth", type=int, default=10)
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("inspect", help="print agent groups and observation layouts")
    common(sp, seed=False, workers=False)
    sp.add_argument("--resolved", action="store_true", help="include the resolved config")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
