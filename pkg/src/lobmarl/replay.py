"""Zero-agent replay of one episode: per-step L2 snapshots and the trade log."""
from __future__ import annotations

import io

import numpy as np

from .config import EnvConfig
from .data.store import EpisodeIndex, MessageStore
from .env.core import LobEnv
from .env.rng import env_keys
from .lob.kernel import l2_levels
from .lob.types import TR_WIDTH

TRADE_FIELDS = ("price", "qty", "aggr_side", "passive_tid", "aggr_tid", "time", "passive_oid",
                "aggr_oid", "passive_seq")


def replay_episode(env_cfg: EnvConfig, store: MessageStore, index: EpisodeIndex, episode: int,
                   depth: int = 10):
    """Returns (snapshots ``[steps, 2, depth, 2]`` of (price, qty) after each step, trades ``[n, 9]``).

    Agents in ``env_cfg`` are ignored; the book sees the replay stream only.
    """
    if not 0 <= episode < len(index):
        raise IndexError(f"episode {episode} out of range [0, {len(index)})")
    cfg = env_cfg.model_copy(update={"agents": ()})
    env = LobEnv(cfg, store, index, 1, record_trades=True)
    state = env.init_state(env_keys(0, 1))
    env.reset_envs(state, [0], [episode])
    snaps = np.zeros((cfg.steps_per_episode, 2, depth, 2), dtype=np.int64)
    trades = []
    for t in range(cfg.steps_per_episode):
        env.step_inplace(state, np.zeros((1, 0), dtype=np.int64))
        n = int(env._rec_n[0])
        trades.append(env._rec[0, :n].copy())
        for side in (0, 1):
            lv = l2_levels(state.orders[0], state.counts[0], side, depth)
            snaps[t, side, : len(lv)] = lv
    tr = np.concatenate(trades) if trades else np.zeros((0, TR_WIDTH), dtype=np.int64)
    return snaps, tr


def format_snapshots(snaps: np.ndarray) -> str:
    """One line per step: ``step,b1p,b1q,...,bDp,bDq,a1p,a1q,...`` (empty levels are 0,0)."""
    steps, _, depth, _ = snaps.shape
    cols = ["step"] + [f"{s}{i}{f}" for s in "ba" for i in range(1, depth + 1) for f in "pq"]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for t in range(steps):
        buf.write(",".join([str(t)] + [str(int(v)) for v in snaps[t].reshape(-1)]) + "\n")
    return buf.getvalue()


def format_trades(trades: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRADE_FIELDS) + "\n")
    for row in trades:
        buf.write(",".join(str(int(v)) for v in row[: len(TRADE_FIELDS)]) + "\n")
    return buf.getvalue()



def reference_episode(store: MessageStore, index: EpisodeIndex, episode: int, depth: int = 10):
    """Same output as :func:`replay_episode`, computed by the naive reference matcher."""
    from .lob.reference import entries_from_l2, entries_l2, reference_replay
    from .lob.types import SYNTH_ID_BASE

    start = index.start(episode)
    m, steps = index.messages_per_step, index.steps_per_episode
    init = entries_from_l2(store.book_state(start), SYNTH_ID_BASE)
    snaps = np.zeros((steps, 2, depth, 2), dtype=np.int64)
    trades = np.zeros((0, TR_WIDTH), dtype=np.int64)
    # each prefix is replayed from the episode start so arrival numbering stays global
    for t in range(steps):
        trades, entries = reference_replay(init, store.messages[start: start + (t + 1) * m])
        snap = entries_l2(entries, depth)
        snaps[t, 0, : len(snap.bids)] = snap.bids
        snaps[t, 1, : len(snap.asks)] = snap.asks
    return snaps, trades
