"""Policies that produce actions for one agent group of a vectorised environment."""
from __future__ import annotations

import numpy as np

from . import network as net


def sample_categorical(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row by inverse CDF from a single uniform per row."""
    logp = net.log_softmax(logits)
    cdf = np.cumsum(np.exp(logp), axis=-1)
    u = rng.random(logits.shape[0])
    a = (cdf < u[:, None]).sum(axis=-1)
    return np.minimum(a, logits.shape[-1] - 1)


class LearnedPolicy:
    """Recurrent network policy; ``greedy`` takes the arg-max action."""

    scripted = None

    def __init__(self, params: dict, greedy: bool = True):
        self.params = params
        self.greedy = greedy

    def initial_hidden(self, n: int) -> np.ndarray:
        return np.zeros((n, net.hidden_size(self.params)))

    def act(self, obs: np.ndarray, hidden: np.ndarray, resets: np.ndarray,
            rng: np.random.Generator):
        """``obs`` is ``[E, n, D]``; returns (actions [E, n], log-probs, values, hidden')."""
        E, n, D = obs.shape
        logits, values, h = net.forward(self.params, obs.reshape(1, E * n, D), hidden,
                                        resets.reshape(1, E * n))
        logits = logits[0]
        if self.greedy:
            a = logits.argmax(axis=-1)
        else:
            a = sample_categorical(logits, rng)
        logp = np.take_along_axis(net.log_softmax(logits), a[:, None], axis=-1)[:, 0]
        return a.reshape(E, n), logp, values[0], h


class RandomPolicy:
    scripted = None

    def __init__(self, n_actions: int):
        self.n_actions = n_actions

    def initial_hidden(self, n: int) -> np.ndarray:
        return np.zeros((n, 0))

    def act(self, obs, hidden, resets, rng):
        E, n, _ = obs.shape
        a = (rng.random((E, n)) * self.n_actions).astype(np.int64)
        return a, None, None, hidden


class ScriptedPolicy:
    """Explicit orders computed inside the environment worker (see ``rollout.scripted_orders``)."""

    def __init__(self, descriptor: tuple):
        self.scripted = descriptor

    def initial_hidden(self, n: int) -> np.ndarray:
        return np.zeros((n, 0))

    def act(self, obs, hidden, resets, rng):
        E, n, _ = obs.shape
        return np.zeros((E, n), dtype=np.int64), None, None, hidden
