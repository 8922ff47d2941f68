"""Contiguous message store and episode indexing.

All messages of a dataset live in one ``(N, 7)`` array; episodes are just
start offsets into it, so overlapping or strided episodes cost nothing.
Book states for initialising episodes are kept only at sampled offsets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..lob.types import MSG_TIME, MSG_WIDTH, L2Snapshot


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MessageStore:
    """Immutable message array plus L2 book states keyed by message offset.

    ``state_bids``/``state_asks`` are ``(K, D, 2)`` arrays padded with zero
    rows; the state at ``state_offsets[i]`` is the book *before* that message.
    """

    messages: np.ndarray
    state_offsets: np.ndarray
    state_bids: np.ndarray
    state_asks: np.ndarray
    tick_size: float = 0.01
    state_interval: int = 100
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        msgs = _readonly(self.messages).reshape(-1, MSG_WIDTH)
        if len(msgs) > 1 and np.any(np.diff(msgs[:, MSG_TIME]) < 0):
            bad = int(np.argmax(np.diff(msgs[:, MSG_TIME]) < 0)) + 1
            raise ValueError(f"message times decrease at index {bad}")
        offsets = _readonly(self.state_offsets).reshape(-1)
        bids = _readonly(self.state_bids)
        asks = _readonly(self.state_asks)
        if bids.shape != asks.shape or bids.ndim != 3 or bids.shape[0] != len(offsets):
            raise ValueError("state arrays must be (K, D, 2) and match state_offsets")
        object.__setattr__(self, "messages", msgs)
        object.__setattr__(self, "state_offsets", offsets)
        object.__setattr__(self, "state_bids", bids)
        object.__setattr__(self, "state_asks", asks)
        object.__setattr__(self, "_pos", {int(o): i for i, o in enumerate(offsets)})

    def __len__(self) -> int:
        return len(self.messages)

    @property
    def depth(self) -> int:
        return self.state_bids.shape[1]

    def has_state(self, offset: int) -> bool:
        return offset in self._pos

    def book_state(self, offset: int) -> L2Snapshot:
        i = self._pos[offset]
        b = self.state_bids[i]
        a = self.state_asks[i]
        return L2Snapshot(b[b[:, 1] > 0], a[a[:, 1] > 0])

    def identical(self, other: "MessageStore") -> bool:
        return (
            np.array_equal(self.messages, other.messages)
            and np.array_equal(self.state_offsets, other.state_offsets)
            and np.array_equal(self.state_bids, other.state_bids)
            and np.array_equal(self.state_asks, other.state_asks)
            and self.tick_size == other.tick_size
            and self.state_interval == other.state_interval
        )

    @classmethod
    def from_states(cls, messages: np.ndarray, states: dict[int, L2Snapshot], depth: int,
                    tick_size: float = 0.01, state_interval: int = 100) -> "MessageStore":
        offsets = np.array(sorted(states), dtype=np.int64)
        bids = np.zeros((len(offsets), depth, 2), dtype=np.int64)
        asks = np.zeros_like(bids)
        for i, off in enumerate(offsets):
            snap = states[int(off)]
            if len(snap.bids) > depth or len(snap.asks) > depth:
                raise ValueError(f"state at offset {off} deeper than {depth} levels")
            bids[i, : len(snap.bids)] = snap.bids
            asks[i, : len(snap.asks)] = snap.asks
        return cls(messages, offsets, bids, asks, tick_size, state_interval)


@dataclass(frozen=True)
class EpisodeIndex:
    starts: np.ndarray
    steps_per_episode: int = 64
    messages_per_step: int = 100
    start_stride_steps: int = 64

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def episode_length(self) -> int:
        """Messages per episode."""
        return self.steps_per_episode * self.messages_per_step

    def start(self, episode: int) -> int:
        if not 0 <= episode < len(self.starts):
            raise IndexError(f"episode {episode} out of range [0, {len(self.starts)})")
        return int(self.starts[episode])


def build_episode_index(store: MessageStore, steps_per_episode: int = 64,
                        messages_per_step: int = 100,
                        start_stride_steps: int = 64) -> EpisodeIndex:
    """Every stride-aligned episode window that fits the store and has a book state."""
    if len(store) == 0:
        raise ValueError("empty message store")
    if min(steps_per_episode, messages_per_step, start_stride_steps) < 1:
        raise ValueError("episode parameters must be positive")
    length = steps_per_episode * messages_per_step
    stride = start_stride_steps * messages_per_step
    if len(store) < length:
        starts = np.zeros(0, dtype=np.int64)
    else:
        cand = np.arange(0, len(store) - length + 1, stride, dtype=np.int64)
        starts = np.array([s for s in cand if store.has_state(int(s))], dtype=np.int64)
    return EpisodeIndex(starts, steps_per_episode, messages_per_step, start_stride_steps)


def slice_for_step(store: MessageStore, index: EpisodeIndex, episode: int,
                   step: int) -> np.ndarray:
    """Read-only view of the replay messages of one step."""
    if not 0 <= step < index.steps_per_episode:
        raise IndexError(f"step {step} out of range [0, {index.steps_per_episode})")
    m = index.messages_per_step
    lo = index.start(episode) + step * m
    return store.messages[lo: lo + m]
