"""Regenerate the replay golden files.

Writes the synthetic store of ``golden.yaml`` as a LOBSTER file pair and, for
every episode, the per-step L2 snapshots and trade log computed by the naive
reference matcher (not the production engine). Run from any directory:

    python3 tests/golden/make_golden.py
"""
from pathlib import Path

from lobmarl.config import load_config
from lobmarl.data.loader import load_store
from lobmarl.data.lobster import write_lobster
from lobmarl.data.store import build_episode_index
from lobmarl.replay import format_snapshots, format_trades, reference_episode

HERE = Path(__file__).resolve().parent
DEPTH = 10


def main():
    cfg = load_config(HERE / "golden.yaml")
    store = load_store(cfg.data)
    write_lobster(store, HERE / "store_message.csv", HERE / "store_orderbook.csv",
                  cfg.env.book_capacity)
    index = build_episode_index(store, cfg.env.steps_per_episode, cfg.env.messages_per_step,
                                cfg.env.start_stride_steps)
    for ep in range(len(index)):
        snaps, trades = reference_episode(store, index, ep, DEPTH)
        (HERE / f"snapshots_ep{ep}.csv").write_text(format_snapshots(snaps))
        (HERE / f"trades_ep{ep}.csv").write_text(format_trades(trades))
    print(f"{len(store)} messages, {len(index)} episodes")


if __name__ == "__main__":
    main()
