"""Build the message store and episode split a run configuration asks for."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..config import DataConfig, EnvConfig
from .lobster import load_lobster
from .store import EpisodeIndex, MessageStore, build_episode_index
from .synthetic import synth_generate


class Dataset(NamedTuple):
    store: MessageStore
    index: EpisodeIndex
    train_episodes: np.ndarray
    eval_episodes: np.ndarray


def load_store(data: DataConfig) -> MessageStore:
    if data.source == "synthetic":
        return synth_generate(data.synthetic, data.seed)
    return load_lobster(data.message_path, data.orderbook_path, data.tick_size,
                        data.state_interval)


def split_episodes(n: int, n_eval: int) -> tuple[np.ndarray, np.ndarray]:
    """The trailing ``n_eval`` episodes are held out; with too few episodes both sets are all."""
    ids = np.arange(n)
    if n_eval <= 0:
        return ids, ids[:0]
    if n_eval >= n:
        return ids, ids
    return ids[: n - n_eval], ids[n - n_eval:]


def load_dataset(data: DataConfig, env: EnvConfig) -> Dataset:
    store = load_store(data)
    index = build_episode_index(store, env.steps_per_episode, env.messages_per_step,
                                env.start_stride_steps)
    if len(index) == 0:
        raise ValueError(f"dataset of {len(store)} messages holds no complete episode of "
                         f"{index.episode_length} messages with a book state")
    train, held = split_episodes(len(index), data.eval_episodes)
    return Dataset(store, index, train, held)
