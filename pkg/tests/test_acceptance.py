"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. The learning smoke
tests dominate the runtime (a few minutes on one core).
"""
import os
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from lobmarl import bench
from lobmarl.agents.rewards import (
    portfolio_value, quadratic_inventory_penalty, reward_buysell, reward_buysell_totals,
    reward_spooner, reward_spooner_totals, slippage, slippage_totals, FillTotals,
)
from lobmarl.config import BenchConfig, RunConfig, load_config
from lobmarl.data.loader import load_dataset, load_store
from lobmarl.data.lobster import load_lobster
from lobmarl.data.store import build_episode_index
from lobmarl.env.core import EnvLayout
from lobmarl.ippo import network as net
from lobmarl.ippo.evaluate import evaluate_matrix, run_episodes
from lobmarl.ippo.gae import compute_gae
from lobmarl.ippo.policy import LearnedPolicy, RandomPolicy
from lobmarl.ippo.ppo import Batch, loss_and_grads
from lobmarl.ippo.rollout import LobVecEnv
from lobmarl.ippo.train import make_eval_fn, train, train_loop
from lobmarl.lob import OrderBook
from lobmarl.lob.randseq import random_messages
from lobmarl.lob.reference import entries_l2, reference_replay
from lobmarl.replay import format_snapshots, format_trades, replay_episode

GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return emit


# -- 1. matching engine vs naive reference ----------------------------------------------
def test_c1_engine_matches_reference(report):
    t0 = time.perf_counter()
    bad = []
    empty = np.zeros((0, 6), dtype=np.int64)
    for seed in range(1000):
        msgs = random_messages(100_000, seed)
        book = OrderBook(4096)
        trades, _, _ = book.apply(msgs)
        ref_trades, entries = reference_replay(empty, msgs)
        if book.evicted or book.dropped or not np.array_equal(trades, ref_trades) \
                or book.l2(4096) != entries_l2(entries):
            bad.append(seed)
    wall = time.perf_counter() - t0
    report(1, not bad and wall < 300,
           f"1000 x 1e5 messages, {len(bad)} mismatches, {wall:.0f}s (budget 300s)")


# -- 2. replay purity ---------------------------------------------------------------------
def test_c2_replay_matches_golden(report):
    cfg = load_config(GOLDEN / "golden.yaml")
    synth = load_store(cfg.data)
    lob = load_lobster(GOLDEN / "store_message.csv", GOLDEN / "store_orderbook.csv")
    mismatched, n_ep = [], 0
    for name, store in (("synthetic", synth), ("lobster", lob)):
        index = build_episode_index(store, cfg.env.steps_per_episode, cfg.env.messages_per_step,
                                    cfg.env.start_stride_steps)
        n_ep = len(index)
        for ep in range(n_ep):
            snaps, trades = replay_episode(cfg.env, store, index, ep, 10)
            if format_snapshots(snaps) != (GOLDEN / f"snapshots_ep{ep}.csv").read_text() or \
                    format_trades(trades) != (GOLDEN / f"trades_ep{ep}.csv").read_text():
                mismatched.append((name, ep))
    report(2, n_ep == 3 and not mismatched,
           f"{n_ep} golden episodes from both stores, mismatches {mismatched}")


# -- 3. reward oracles ----------------------------------------------------------------------
def _oracle_buysell(fills, m):
    total = 0
    for p, q, s in fills:
        total += (m - p) * q if s == 1 else (p - m) * q
    return total


def _oracle_spooner(fills, m, inv, mid, prev, lam):
    move = inv * (mid - prev)
    return _oracle_buysell(fills, m) + (lam * move if move > 0 else move)


def _random_fills(rng, k):
    return [(int(rng.integers(1, 5000)), int(rng.integers(1, 100)), int(rng.choice([1, -1])))
            for _ in range(k)]


def _frac(rng, hi=10_000):
    return Fraction(int(rng.integers(0, hi * 16)), int(rng.integers(1, 17)))


def test_c3_reward_oracles(report):
    rng = np.random.default_rng(2024)
    n = 10_000
    exact_bad = 0
    for _ in range(n):
        fills = _random_fills(rng, int(rng.integers(0, 6)))
        m, mid, prev = _frac(rng), _frac(rng), _frac(rng)
        inv = int(rng.integers(-300, 301))
        lam = Fraction(int(rng.integers(0, 21)), 20)
        rho, cap = _frac(rng, 100), int(rng.integers(1, 500))
        cash = int(rng.integers(-10**8, 10**8))
        d = int(rng.choice([1, -1]))
        exec_fills = [(p, q) for p, q, _ in fills]
        ok = (reward_buysell(fills, m) == _oracle_buysell(fills, m)
              and reward_spooner(fills, m, inv, mid, prev, lam)
              == _oracle_spooner(fills, m, inv, mid, prev, lam)
              and quadratic_inventory_penalty(inv, rho, cap) == rho * Fraction(inv, cap) ** 2
              and portfolio_value(inv, cash, mid) == inv * mid + cash
              and slippage(exec_fills, m, d) == d * sum(q * (p - m) for p, q in exec_fills))
        exact_bad += not ok

    # real-valued inputs through the vectorised path, compared with exact rationals
    bq, sq = rng.integers(0, 200, n).astype(float), rng.integers(0, 200, n).astype(float)
    bn = bq * rng.uniform(900, 1100, n)
    sn = sq * rng.uniform(900, 1100, n)
    m, mid, prev = rng.uniform(900, 1100, (3, n))
    inv = rng.integers(-300, 301, n).astype(float)
    lam = rng.uniform(0, 1, n)
    rho, cap = rng.uniform(0, 100, n), rng.integers(1, 500, n).astype(float)
    d = rng.choice([1.0, -1.0], n)
    t = FillTotals(bq, bn, sq, sn)
    got = {
        "buysell": reward_buysell_totals(t, m),
        "spooner": reward_spooner_totals(t, m, inv, mid, prev, lam),
        "penalty": quadratic_inventory_penalty(inv, rho, cap),
        "pv": portfolio_value(inv, bn - sn, mid),
        "slippage": slippage_totals(bq, bn, m, d),
    }
    worst = 0.0
    F = Fraction
    for i in range(n):
        move = F(inv[i]) * (F(mid[i]) - F(prev[i]))
        want = {
            "buysell": (F(m[i]) * F(bq[i]) - F(bn[i])) + (F(sn[i]) - F(m[i]) * F(sq[i])),
            "penalty": F(rho[i]) * (F(inv[i]) / F(cap[i])) ** 2,
            "pv": F(inv[i]) * F(mid[i]) + (F(bn[i]) - F(sn[i])),
            "slippage": F(d[i]) * (F(bn[i]) - F(m[i]) * F(bq[i])),
        }
        want["spooner"] = want["buysell"] + (F(lam[i]) * move if move > 0 else move)
        # errors are measured against the summed magnitude of each formula's terms, since
        # buy and sell edges can cancel to a result far smaller than the inputs
        terms = abs(m[i] * bq[i]) + bn[i] + sn[i] + abs(m[i] * sq[i])
        scale = {"buysell": terms, "spooner": terms + abs(inv[i]) * (mid[i] + prev[i]),
                 "penalty": abs(float(want["penalty"])),
                 "pv": abs(inv[i] * mid[i]) + bn[i] + sn[i], "slippage": bn[i] + abs(m[i] * bq[i])}
        for k, w in want.items():
            err = abs(float(F(float(got[k][i])) - w))
            worst = max(worst, err / scale[k] if scale[k] else err)
    report(3, exact_bad == 0 and worst <= 1e-12,
           f"{n} exact cases, {exact_bad} mismatches; {n} real cases, worst rel err {worst:.2e} (<= 1e-12)")


# -- 4. limiting-case identities ------------------------------------------------------------
def test_c4_limiting_cases(report):
    rng = np.random.default_rng(77)
    bad = {"lambda_one": 0, "no_move": 0, "antisym": 0}
    for _ in range(10_000):
        fills = _random_fills(rng, int(rng.integers(0, 6)))
        m, mid, prev = _frac(rng), _frac(rng), _frac(rng)
        inv = int(rng.integers(-300, 301))
        lam = Fraction(int(rng.integers(0, 21)), 20)
        if reward_spooner(fills, m, inv, mid, prev, 1) != \
                reward_buysell(fills, m) + inv * (mid - prev):
            bad["lambda_one"] += 1
        if reward_spooner(fills, m, inv, mid, mid, lam) != reward_buysell(fills, m) or \
                reward_spooner(fills, m, 0, mid, prev, lam) != reward_buysell(fills, m):
            bad["no_move"] += 1
        f = [(p, q) for p, q, _ in fills]
        if slippage(f, m, 1) != -slippage(f, m, -1):
            bad["antisym"] += 1
    report(4, not any(bad.values()), f"10000 random rational cases per identity, failures {bad}")


# -- 5. GAE and gradients ----------------------------------------------------------------------
def _gae_loop(r, v, d, gamma, lam, last):
    T = len(r)
    nxt = np.append(v[1:], last)
    delta = [r[t] + gamma * nxt[t] * (1 - d[t]) - v[t] for t in range(T)]
    out = np.zeros(T)
    for t in range(T):
        acc, w = 0.0, 1.0
        for k in range(t, T):
            acc += w * delta[k]
            if d[k]:
                break
            w *= gamma * lam
        out[t] = acc
    return out


def _fd_grads(p, mb, kw, eps=1e-6):
    g = {}
    for k, v in p.items():
        g[k] = np.zeros_like(v)
        for i in np.ndindex(v.shape):
            old = v[i]
            v[i] = old + eps
            lp = loss_and_grads(p, mb, need_grads=False, **kw)[0]
            v[i] = old - eps
            lm = loss_and_grads(p, mb, need_grads=False, **kw)[0]
            v[i] = old
            g[k][i] = (lp - lm) / (2 * eps)
    return g


def test_c5_gae_and_gradients(report):
    rng = np.random.default_rng(5)
    gae_err = 0.0
    for _ in range(300):
        T, N = int(rng.integers(1, 40)), int(rng.integers(1, 5))
        r, v = rng.normal(0, 5, (T, N)), rng.normal(0, 5, (T, N))
        d = (rng.uniform(size=(T, N)) < 0.1).astype(float)
        gamma, lam, last = rng.uniform(0.5, 1), rng.uniform(0, 1), rng.normal(0, 5, N)
        adv, _ = compute_gae(r, v, d, gamma, lam, last)
        for j in range(N):
            want = _gae_loop(r[:, j], v[:, j], d[:, j], gamma, lam, last[j])
            gae_err = max(gae_err, float(np.max(np.abs(adv[:, j] - want))
                                         / max(1.0, np.abs(want).max())))
    grad_err = 0.0
    kw = dict(clip_eps=0.2, vf_coef=0.5, ent_coef=0.01)
    for seed in range(6):
        g_rng = np.random.default_rng(100 + seed)
        D, A, H, T, N = 3, 4, 3, 5, 3
        p = net.init_params(D, A, H, g_rng, actor_scale=1.0)
        obs = g_rng.standard_normal((T, N, D))
        resets = np.zeros((T, N))
        resets[0] = 1.0
        resets[3, 1] = 1.0
        logits, values, _ = net.forward(p, obs, np.zeros((N, H)), resets)
        acts = g_rng.integers(0, A, (T, N))
        logp = np.take_along_axis(net.log_softmax(logits), acts[..., None], -1)[..., 0]
        old = logp + g_rng.choice([-0.6, -0.05, 0.05, 0.6], size=logp.shape)
        mb = Batch(obs, acts, old, values, g_rng.standard_normal((T, N)),
                   values + g_rng.standard_normal((T, N)), resets, g_rng.standard_normal((N, H)))
        _, g, _ = loss_and_grads(p, mb, **kw)
        fd = _fd_grads(p, mb, kw)
        for k in g:
            den = np.maximum(np.maximum(np.abs(g[k]), np.abs(fd[k])), 1e-6)
            grad_err = max(grad_err, float((np.abs(g[k] - fd[k]) / den).max()))
    report(5, gae_err <= 1e-10 and grad_err <= 1e-4,
           f"GAE worst rel err {gae_err:.1e} (<= 1e-10); gradient worst rel err {grad_err:.1e}"
           " (<= 1e-4)")


# -- 6. determinism ------------------------------------------------------------------------------
@pytest.fixture(scope="module")
def det_runs(tmp_path_factory):
    cfg = RunConfig()
    counts = sorted({1, 4, os.cpu_count() or 1})
    runs = {}
    for w in counts:
        for rep in (0, 1) if w == 1 else (0,):
            out = tmp_path_factory.mktemp(f"det_w{w}_{rep}")
            train(cfg, out, workers=w)
            runs[(w, rep)] = out
    return cfg, runs


def test_c6_determinism(det_runs, report):
    cfg, runs = det_runs
    ref = (runs[(1, 0)] / "metrics.jsonl").read_bytes()
    same = {k: (v / "metrics.jsonl").read_bytes() == ref for k, v in runs.items()}
    lines = ref.decode().splitlines()
    ok = all(same.values()) and len(lines) == 10 and cfg.train.num_envs == 64 \
        and cfg.train.rollout_length == 64 and len(cfg.env.agents) == 2
    report(6, ok, f"E=64 T=64 10 updates; runs (workers, repeat) identical: {same}")


# -- 7. throughput trends ----------------------------------------------------------------------
def test_c7_throughput_trends(report):
    t0 = time.perf_counter()
    store = load_store(RunConfig().data)
    cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    workers = tuple(range(1, cores + 1))
    b = BenchConfig(n_envs=4000, n_steps=30, messages_per_step=(1, 100), agents_per_type=(1, 5, 10),
                    workers=(1,), warmup_steps=3)
    rows = bench.run_grid(RunConfig(), store=store, bench=b)
    rate = {(r.messages_per_step, r.agents_per_type): r.steps_per_s for r in rows}
    msgs_ok = all(rate[(1, k)] > rate[(100, k)] for k in (1, 5, 10))
    agents_ok = all(bench.monotone_decreasing([rate[(m, k)] for k in (1, 5, 10)]) for m in (1, 100))
    scale = bench.run_grid(RunConfig(), store=store, bench=b.model_copy(update={
        "messages_per_step": (100,), "agents_per_type": (1,), "workers": workers}))
    eff = {r.workers: round(r.efficiency, 3) for r in scale}
    scale_ok = all(e >= 0.5 for e in eff.values())
    wall = time.perf_counter() - t0
    report(7, msgs_ok and agents_ok and scale_ok and wall < 600,
           f"msgs trend {msgs_ok}, agents trend {agents_ok}, efficiency by workers {eff} "
           f"({cores} usable core(s)), {wall:.0f}s")


# -- 8. learning smoke tests --------------------------------------------------------------------
EXEC_ONLY = "env.agents=[{name: exec, type: executor, action_space: exec_complex, " \
            "observation_space: exec_basic, reward: exec}]"


def _mm_only(penalty):
    return ("env.agents=[{name: mm, type: market_maker, action_space: fixed_quant, "
            "observation_space: mm_basic, reward: spooner, "
            f"params: {{inventory_penalty: {penalty}}}}}]")


def _fit(cfg, ds, evaluate_fn=None):
    with LobVecEnv(cfg.env, ds.store, ds.index, cfg.train.num_envs, cfg.train.seed,
                   episodes=ds.train_episodes) as venv:
        return train_loop(venv, cfg.train, evaluate_fn=evaluate_fn)


def test_c8a_executor_learns(report):
    t0 = time.perf_counter()
    cfg = load_config(None, [
        "data.synthetic.volatility=0", "data.synthetic.initial_mid=1000.5",
        "data.synthetic.n_messages=2100000", "data.eval_episodes=256", EXEC_ONLY,
        "train.updates=500", "train.eval_interval=10", "train.reward_scale={exec: 0.001}"])
    assert cfg.env.agents[0].params.unfilled_penalty_coef == 0.1
    ds = load_dataset(cfg.data, cfg.env)
    assert len(ds.eval_episodes) == 256
    # model selection sees training episodes only; the 256 test episodes stay untouched
    validate = make_eval_fn(cfg, ds.store, ds.index, ds.train_episodes[-64:])
    best = {"slippage": np.inf, "params": None, "update": 0}

    def evaluate_fn(params, update):
        rec = validate(params, update)
        if rec["eval/exec/completion"] >= 0.995 and rec["eval/exec/slippage"] < best["slippage"]:
            best.update(slippage=rec["eval/exec/slippage"], update=update,
                        params={k: v.copy() for k, v in params["exec"].items()})
        return rec

    res = _fit(cfg, ds, evaluate_fn)
    assert best["params"] is not None, "no checkpoint reached 99.5% validation completion"
    task = cfg.env.agents[0].params.task_size
    layout = EnvLayout(cfg.env)
    trained = run_episodes(cfg.env, ds.store, ds.index, ds.eval_episodes,
                           {"exec": LearnedPolicy(best["params"], greedy=True)}, cfg.eval.seed)
    rand = run_episodes(cfg.env, ds.store, ds.index, ds.eval_episodes,
                        {"exec": RandomPolicy(layout.group("exec").arity)}, cfg.eval.seed)
    completion = 1.0 - trained["exec"]["task_remaining"].mean() / task
    s_tr, s_rn = trained["exec"]["slippage"][:, 0], rand["exec"]["slippage"][:, 0]
    p = float(stats.ttest_rel(s_tr, s_rn, alternative="less").pvalue)
    wall = time.perf_counter() - t0
    report("8a", res.updates <= 500 and completion >= 0.99 and s_tr.mean() < s_rn.mean()
           and p < 0.01,
           f"checkpoint of update {best['update']}/{res.updates}, held-out completion "
           f"{completion:.4f}, slippage {s_tr.mean():.1f} vs random {s_rn.mean():.1f} "
           f"(paired one-sided p={p:.1e}), {wall:.0f}s")


def test_c8b_inventory_penalty_lowers_variance(report):
    t0 = time.perf_counter()
    inv = {}
    for penalty in ("quadratic", "none"):
        cfg = load_config(None, [
            "data.synthetic.n_messages=2100000", "data.eval_episodes=256", _mm_only(penalty),
            "train.updates=100", "train.reward_scale={mm: 0.1}"])
        assert cfg.env.agents[0].params.rho == 50
        ds = load_dataset(cfg.data, cfg.env)
        res = _fit(cfg, ds)
        out = run_episodes(cfg.env, ds.store, ds.index, ds.eval_episodes,
                           {"mm": LearnedPolicy(res.params["mm"], greedy=True)}, cfg.eval.seed)
        inv[penalty] = out["mm"]["inventory"][:, 0].astype(np.float64)
    pen, free = inv["quadratic"], inv["none"]
    var_pen, var_free = pen.var(ddof=1), free.var(ddof=1)
    d = pen ** 2 - free ** 2
    p = float(stats.wilcoxon(d, alternative="less").pvalue) if np.any(d != 0) else 1.0
    wall = time.perf_counter() - t0
    report("8b", var_pen < var_free and p < 0.01,
           f"terminal inventory variance {var_pen:.1f} (penalised) vs {var_free:.1f} (none), "
           f"paired Wilcoxon on I_T^2 one-sided p={p:.1e}, {wall:.0f}s")


# -- 9. cross-play matrix -----------------------------------------------------------------------
def test_c9_cross_play_matrix(det_runs, report):
    cfg, runs = det_runs
    ds = load_dataset(cfg.data, cfg.env)
    ck = f"learned:{runs[(1, 0)] / 'checkpoint.npz'}"
    mat = evaluate_matrix(cfg.env, ds.store, ds.index, [ck, "twap"], [ck, "avst"],
                          ds.eval_episodes, cfg.eval)
    cells = {(c["row"], c["col"]): c for c in mat["cells"]}
    complete = set(cells) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    shared = all(c["episodes"] == len(ds.eval_episodes) for c in cells.values())
    twap = [cells[(1, j)] for j in (0, 1)]
    twap_ok = all(c["exec_filled_min"] == c["exec_filled_max"] == 600 for c in twap)
    paired_ok = len(mat["paired"]) == 8 and all(0 <= q["p_value"] <= 1 for q in mat["paired"])
    report(9, complete and shared and twap_ok and paired_ok,
           f"2x2 grid over {len(ds.eval_episodes)} shared episodes, 8 paired tests, TWAP fills "
           f"{[(c['exec_filled_min'], c['exec_filled_max']) for c in twap]}")
