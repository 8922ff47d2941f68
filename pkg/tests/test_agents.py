import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lobmarl.agents import (
    action_arity, decode_avst, decode_directional, decode_exec, decode_fixed_quant,
    decode_spread_skew, observation_dim, observation_layout, portfolio_value,
    quadratic_inventory_penalty, reward_buysell, reward_exec, reward_spooner, slippage,
)
from lobmarl.agents.rewards import BUY, SELL, far_touch_reference
from lobmarl.config import AgentParams, AvStParams
from lobmarl.env import make_env, reset, step
from lobmarl.lob import Side

TOPS = (1000, 1004)


# -- decoders -------------------------------------------------------------------------
def test_fixed_quant_examples():
    assert decode_fixed_quant(0, TOPS, 10) == []
    assert decode_fixed_quant(1, TOPS, 10) == [(Side.BID, 998, 10), (Side.ASK, 1006, 10)]
    assert decode_fixed_quant(2, TOPS, 10) == [(Side.BID, 996, 10), (Side.ASK, 1008, 10)]
    assert decode_fixed_quant(3, TOPS, 10) == [(Side.BID, 1001, 10), (Side.ASK, 1003, 10)]
    assert decode_fixed_quant(4, TOPS, 10) == [(Side.BID, 998, 10), (Side.ASK, 1004, 10)]
    assert decode_fixed_quant(5, TOPS, 10) == [(Side.BID, 1000, 10), (Side.ASK, 1006, 10)]
    assert decode_fixed_quant(6, TOPS, 10) == [(Side.BID, 995, 10), (Side.ASK, 1003, 10)]
    assert decode_fixed_quant(7, TOPS, 10) == [(Side.BID, 1001, 10), (Side.ASK, 1009, 10)]
    assert action_arity("fixed_quant") == 8


def test_fixed_quant_empty_side_falls_back_to_last_mid():
    out = decode_fixed_quant(1, (None, 1004), 10, last_mid_half=2002, half_spread=1.0)
    assert out == [(Side.BID, 998, 10), (Side.ASK, 1004, 10)]


@pytest.mark.parametrize("fn,args", [
    (decode_fixed_quant, (8, TOPS, 10)),
    (decode_fixed_quant, (-1, TOPS, 10)),
    (decode_directional, (3, TOPS, 10)),
    (decode_spread_skew, (9, 2000, AgentParams().spread_skew_table, 10)),
])
def test_invalid_ids_raise(fn, args):
    with pytest.raises(ValueError):
        fn(*args)


def test_spread_skew_examples():
    tab = [(1.0, 0.0), (2.0, 1.0)]
    assert decode_spread_skew(0, 2000, tab, 10) == [(Side.BID, 999, 10), (Side.ASK, 1001, 10)]
    assert decode_spread_skew(1, 2000, tab, 10) == [(Side.BID, 999, 10), (Side.ASK, 1003, 10)]
    # zero half spread on an integer mid: bid == ask before the clamp widens the ask
    out = decode_spread_skew(0, 2000, [(0.0, 0.0)], 10)
    assert out == [(Side.BID, 1000, 10), (Side.ASK, 1001, 10)]
    assert action_arity("spread_skew") == 9


def _avst_oracle(mid, inv, gamma, sigma, kappa, tl):
    r = mid - inv * gamma * sigma ** 2 * tl
    d = 0.5 * (gamma * sigma ** 2 * tl + 2.0 / gamma * math.log(1 + gamma / kappa))
    pb = math.floor(r - d)
    pa = math.ceil(r + d)
    pb = max(pb, 1)
    return pb, max(pa, pb + 1)


def test_avst_examples():
    p = AvStParams(gamma_grid=(0.1,), sigma=2.0, kappa=1.5)
    out = decode_avst(0, 2000, 3.0, 1.0, p, 10)
    assert [(o[1]) for o in out] == list(_avst_oracle(1000, 3, 0.1, 2.0, 1.5, 1.0))
    assert out == [(Side.BID, 997, 10), (Side.ASK, 1000, 10)]
    # t = T with flat inventory: symmetric around mid
    p = AvStParams(gamma_grid=(0.01, 0.5), sigma=1.0, kappa=1.5)
    for aid in range(2):
        (_, pb, _), (_, pa, _) = decode_avst(aid, 2000, 0.0, 0.0, p, 10)
        assert 1000 - pb == pa - 1000
        half = math.log(1 + p.gamma_grid[aid] / p.kappa) / p.gamma_grid[aid]
        assert pa == math.ceil(1000 + half)


@given(inv=st.integers(1, 20), aid=st.integers(0, 3), tl=st.floats(0.1, 1.0))
def test_avst_long_inventory_skews_down(inv, aid, tl):
    p = AvStParams(sigma=3.0)
    flat = decode_avst(aid, 20_000, 0.0, tl, p, 10)
    long = decode_avst(aid, 20_000, float(inv), tl, p, 10)
    assert long[0][1] <= flat[0][1] and long[1][1] <= flat[1][1]


def test_exec_examples():
    assert decode_exec(0, TOPS, 10, False, direction=Side.BID, task_remaining=600) == [
        (Side.BID, 1004, 10)]
    assert decode_exec(0, TOPS, 10, False, direction=Side.ASK, task_remaining=600) == [
        (Side.ASK, 1000, 10)]
    # complex id = near touch (price index 1) x5
    assert decode_exec(1 * 3 + 2, TOPS, 10, True, direction=Side.BID, task_remaining=600) == [
        (Side.BID, 1000, 50)]
    for aid in range(12):
        out = decode_exec(aid, TOPS, 10, True, direction=Side.BID, task_remaining=3)
        assert out[0][2] == 3
    assert decode_exec(0, TOPS, 10, False, direction=Side.BID, task_remaining=0) == []
    assert action_arity("exec_simple") == 4 and action_arity("exec_complex") == 12


def test_exec_reference_prices():
    prices = [decode_exec(a, TOPS, 10, False, direction=Side.BID, task_remaining=600)[0][1]
              for a in range(4)]
    assert prices == [1004, 1000, 999, 1002]
    prices = [decode_exec(a, TOPS, 10, False, direction=Side.ASK, task_remaining=600)[0][1]
              for a in range(4)]
    assert prices == [1000, 1004, 1005, 1002]


def test_exec_far_touch_fallback():
    out = decode_exec(0, (1000, None), 10, False, direction=Side.BID, task_remaining=600,
                      last_tops=(1000, 1003))
    assert out == [(Side.BID, 1004, 10)]


def test_directional_examples():
    assert decode_directional(0, TOPS, 10) == []
    assert decode_directional(1, TOPS, 10) == [(Side.BID, 1000, 10)]
    assert decode_directional(2, TOPS, 10) == [(Side.ASK, 1004, 10)]


tops_st = st.tuples(st.integers(2, 5000), st.integers(1, 50)).map(lambda t: (t[0], t[0] + t[1]))


@given(tops=tops_st, aid=st.integers(0, 7), size=st.integers(1, 50))
def test_fixed_quant_output_contract(tops, aid, size):
    out = decode_fixed_quant(aid, tops, size)
    assert all(p > 0 and 0 < q <= size for _, p, q in out)
    if len(out) == 2:
        assert out[0][0] == Side.BID and out[1][0] == Side.ASK
        assert out[0][1] < out[1][1]


@given(mid=st.integers(4, 10_000), aid=st.integers(0, 8))
def test_spread_skew_output_contract(mid, aid):
    out = decode_spread_skew(aid, mid, AgentParams().spread_skew_table, 10)
    assert len(out) == 2 and out[0][1] < out[1][1] and out[0][1] > 0


@given(tops=tops_st, aid=st.integers(0, 11), rem=st.integers(0, 600),
       d=st.sampled_from([Side.BID, Side.ASK]))
def test_exec_output_contract(tops, aid, rem, d):
    out = decode_exec(aid, tops, 10, True, direction=d, task_remaining=rem)
    assert len(out) <= 1
    for side, p, q in out:
        assert side == d and p > 0 and 0 < q <= min(50, rem)


# -- rewards --------------------------------------------------------------------------
def test_buysell_examples():
    assert reward_buysell([], 1000) == 0
    assert reward_buysell([(999, 10, BUY)], 1000) == 10
    assert reward_buysell([(999, 10, BUY), (999, 10, SELL)], 1000) == 0


def test_spooner_examples():
    assert reward_spooner([], 1000, 0, 1000, 1000, 0.5) == 0
    assert reward_spooner([], 1000, 5, 1002, 1000, 0.0) == 0
    assert reward_spooner([], 1000, 5, 998, 1000, 0.0) == -10
    assert reward_spooner([], 1000, 5, 1002, 1000, 1.0) == 10


fills_st = st.lists(st.tuples(st.integers(1, 5000), st.integers(1, 100),
                              st.sampled_from([BUY, SELL])), max_size=8)
frac_st = st.fractions(min_value=0, max_value=10_000, max_denominator=16)


@given(fills=fills_st, mbar=frac_st, inv=st.integers(-200, 200), mid=frac_st, prev=frac_st)
def test_spooner_lambda_one_is_buysell_plus_inventory(fills, mbar, inv, mid, prev):
    assert reward_spooner(fills, mbar, inv, mid, prev, 1) == \
        reward_buysell(fills, mbar) + inv * (mid - prev)


@given(fills=fills_st, mbar=frac_st, mid=frac_st, lam=st.fractions(0, 1, max_denominator=20))
def test_spooner_equals_buysell_without_inventory_move(fills, mbar, mid, lam):
    assert reward_spooner(fills, mbar, 0, mid, mid / 2, lam) == reward_buysell(fills, mbar)
    assert reward_spooner(fills, mbar, 7, mid, mid, lam) == reward_buysell(fills, mbar)


@given(fills=fills_st, mbar=frac_st, inv=st.integers(-50, 50), dm=st.integers(-20, 20),
       l1=st.fractions(0, 1, max_denominator=20), l2=st.fractions(0, 1, max_denominator=20))
def test_spooner_monotone_in_damping(fills, mbar, inv, dm, l1, l2):
    lo, hi = min(l1, l2), max(l1, l2)
    r_lo = reward_spooner(fills, mbar, inv, 1000 + dm, 1000, lo)
    r_hi = reward_spooner(fills, mbar, inv, 1000 + dm, 1000, hi)
    if inv * dm > 0:
        assert r_lo <= r_hi
    else:
        assert r_lo == r_hi


def test_penalty_examples():
    assert quadratic_inventory_penalty(0, 50, 100) == 0
    assert quadratic_inventory_penalty(100, 50, 100) == 50
    with pytest.raises(ValueError):
        quadratic_inventory_penalty(1, 50, 0)


@given(inv=st.integers(-1000, 1000), rho=frac_st, cap=st.integers(1, 500))
def test_penalty_symmetric(inv, rho, cap):
    assert quadratic_inventory_penalty(Fraction(-inv), rho, cap) == \
        quadratic_inventory_penalty(Fraction(inv), rho, cap)


def test_portfolio_value_examples():
    assert portfolio_value(0, -123, 1000) == -123
    assert portfolio_value(10, -9990, 1000) == 10
    assert far_touch_reference(10, 999, 1001, 1000) == 999
    assert far_touch_reference(-10, 999, 1001, 1000) == 1001
    assert far_touch_reference(0, 999, 1001, 1000) == 1000


@given(i1=st.integers(-500, 500), i2=st.integers(-500, 500), c1=st.integers(-10**7, 10**7),
       c2=st.integers(-10**7, 10**7), a=st.integers(-5, 5), p=frac_st)
def test_portfolio_value_linear(i1, i2, c1, c2, a, p):
    assert portfolio_value(a * i1 + i2, a * c1 + c2, p) == \
        a * portfolio_value(i1, c1, p) + portfolio_value(i2, c2, p)


def test_slippage_examples():
    assert slippage([(1000, 600)], 1000, BUY) == 0
    fills = [(Fraction(1000) + Fraction(1, 5), 600)]
    assert slippage(fills, 1000, BUY) == 120
    assert slippage([(1001, 10), (1002, 5)], 1000, SELL) < 0


@given(fills=fills_st, p0=frac_st)
def test_slippage_antisymmetric(fills, p0):
    f = [(p, q) for p, q, _ in fills]
    assert slippage(f, p0, BUY) == -slippage(f, p0, SELL)


def test_reward_exec_examples():
    assert reward_exec([(1000, 10)], 1000, BUY, 0.0, False, 590, 0.1) == 0
    assert reward_exec([], 1000, BUY, 0.0, True, 0, 0.1) == 0
    assert reward_exec([], 1000, BUY, 0.0, True, 60, Fraction(1, 10)) == -6000
    assert reward_exec([(1001, 10)], 1000, BUY, 0.0, False, 0, 0.1) == -10


# -- observations ------------------------------------------------------------------------
def test_layout_lengths():
    assert observation_dim("mm_basic") == len(observation_layout("mm_basic")) == 10
    assert observation_dim("exec_basic") == 11
    assert observation_dim("mm_rich", 5) == 10 + 2 + 20
    assert observation_dim("exec_rich", 3) == 11 + 1 + 12
    with pytest.raises(ValueError):
        observation_layout("nope")


@pytest.mark.parametrize("mm_space,ex_space", [("mm_basic", "exec_basic"),
                                               ("mm_rich", "exec_rich")])
def test_observation_contracts(small_store, small_index, env_cfg, mm_space, ex_space):
    agents = tuple(a.model_copy(update={"observation_space": mm_space if a.name == "mm"
                                        else ex_space}) for a in env_cfg.agents)
    cfg = env_cfg.model_copy(update={"agents": agents})
    env = make_env(cfg, small_store, small_index)
    lay_mm = observation_layout(mm_space, cfg.obs_depth)
    lay_ex = observation_layout(ex_space, cfg.obs_depth)
    rng = np.random.default_rng(3)
    for ep in range(len(small_index)):
        state, obs = reset(env, ep, seed=ep)
        assert obs["mm"][0, 0, lay_mm.index("inventory")] == 0.0
        assert obs["mm"][0, 0, lay_mm.index("cash")] == 0.0
        assert obs["exec"][0, 0, lay_ex.index("task_remaining")] == 1.0
        d = obs["exec"][0, 0, lay_ex.index("direction")]
        assert d in (-1.0, 1.0) and d == state.direction[0, env.layout.group("exec").cols[0]]
        for _ in range(cfg.steps_per_episode):
            acts = {g.name: rng.integers(0, g.arity, (1, g.count)) for g in env.groups}
            state, out = step(env, state, acts)
            o = out.observations
            assert o["mm"].shape == (1, 1, len(lay_mm)) and o["exec"].shape == (1, 1, len(lay_ex))
            assert -1.0 <= o["mm"][0, 0, lay_mm.index("imbalance")] <= 1.0
            assert -1.0 <= o["exec"][0, 0, lay_ex.index("imbalance")] <= 1.0
            assert np.all(np.isfinite(o["mm"])) and np.all(np.isfinite(o["exec"]))


def test_completed_task_observation_is_zero(small_store, small_index, env_cfg):
    env = make_env(env_cfg, small_store, small_index)
    state, _ = reset(env, 0, seed=0)
    ex = env.layout.group("exec")
    lay = observation_layout("exec_basic", env_cfg.obs_depth)
    far_x5 = 0 * 3 + 2
    for _ in range(env_cfg.steps_per_episode):
        state, out = step(env, state, {"mm": np.zeros((1, 1), np.int64),
                                       "exec": np.full((1, 1), far_x5)})
    if state.task_rem[0, ex.cols[0]] == 0:
        assert out.observations["exec"][0, 0, lay.index("task_remaining")] == 0.0
    else:
        pytest.fail("aggressive executor did not finish its task in one episode")
