"""Recurrent actor-critic with hand-written backpropagation through time.

Per time step::

    e  = tanh(x We + be)
    h~ = h * (1 - reset)                       # episode boundary
    r  = sigmoid(e Wxr + bxr + h~ Whr + bhr)
    z  = sigmoid(e Wxz + bxz + h~ Whz + bhz)
    n  = tanh(e Wxn + bxn + r * (h~ Whn + bhn))
    h  = (1 - z) * n + z * h~
    logits = h Wpi + bpi,   value = h Wv + bv

The three gates are stored side by side in ``Wx``/``Wh`` (columns r, z, n).
Everything is float64 numpy.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

PARAM_NAMES = ("We", "be", "Wx", "bx", "Wh", "bh", "Wpi", "bpi", "Wv", "bv")


def init_params(obs_dim: int, n_actions: int, hidden: int, rng: np.random.Generator,
                actor_scale: float = 0.01) -> dict[str, np.ndarray]:
    H = hidden

    def dense(fan_in, fan_out, scale=1.0):
        return rng.standard_normal((fan_in, fan_out)) * (scale / np.sqrt(fan_in))

    return {
        "We": dense(obs_dim, H), "be": np.zeros(H),
        "Wx": dense(H, 3 * H), "bx": np.zeros(3 * H),
        "Wh": dense(H, 3 * H), "bh": np.zeros(3 * H),
        "Wpi": dense(H, n_actions, actor_scale), "bpi": np.zeros(n_actions),
        "Wv": dense(H, 1), "bv": np.zeros(1),
    }


def zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def hidden_size(params: dict) -> int:
    return params["be"].shape[0]


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _check(params, obs, h0, resets):
    if obs.ndim != 3:
        raise ValueError(f"obs must be [T, B, D], got shape {obs.shape}")
    T, B, D = obs.shape
    if params["We"].shape[0] != D:
        raise ValueError(f"obs dim {D} does not match network input {params['We'].shape[0]}")
    H = hidden_size(params)
    if h0.shape != (B, H):
        raise ValueError(f"hidden state must be {(B, H)}, got {h0.shape}")
    if resets.shape != (T, B):
        raise ValueError(f"reset mask must be {(T, B)}, got {resets.shape}")


class Cache(NamedTuple):
    x: np.ndarray
    e: np.ndarray
    h_in: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: np.ndarray
    gh_n: np.ndarray
    h: np.ndarray
    keep: np.ndarray


def forward(params: dict, obs: np.ndarray, h0: np.ndarray, resets: np.ndarray,
            with_cache: bool = False):
    """Run a ``[T, B, D]`` sequence; returns (logits [T,B,A], values [T,B], h_T[, cache])."""
    obs = np.asarray(obs, dtype=np.float64)
    resets = np.asarray(resets, dtype=np.float64)
    _check(params, obs, h0, resets)
    T, B, _ = obs.shape
    H = hidden_size(params)
    e = np.tanh(obs @ params["We"] + params["be"])
    gx = e @ params["Wx"] + params["bx"]
    keep = 1.0 - resets
    hs = np.empty((T, B, H))
    if with_cache:
        h_in_all = np.empty((T, B, H))
        r_all = np.empty((T, B, H))
        z_all = np.empty((T, B, H))
        n_all = np.empty((T, B, H))
        ghn_all = np.empty((T, B, H))
    h = h0
    Wh, bh = params["Wh"], params["bh"]
    for t in range(T):
        h_in = h * keep[t][:, None]
        gh = h_in @ Wh + bh
        r = _sigmoid(gx[t, :, :H] + gh[:, :H])
        z = _sigmoid(gx[t, :, H:2 * H] + gh[:, H:2 * H])
        n = np.tanh(gx[t, :, 2 * H:] + r * gh[:, 2 * H:])
        h = (1.0 - z) * n + z * h_in
        hs[t] = h
        if with_cache:
            h_in_all[t] = h_in
            r_all[t] = r
            z_all[t] = z
            n_all[t] = n
            ghn_all[t] = gh[:, 2 * H:]
    logits = hs @ params["Wpi"] + params["bpi"]
    values = (hs @ params["Wv"])[..., 0] + params["bv"][0]
    if not with_cache:
        return logits, values, h
    cache = Cache(obs, e, h_in_all, r_all, z_all, n_all, ghn_all, hs, keep)
    return logits, values, h, cache


def backward(params: dict, cache: Cache, dlogits: np.ndarray, dvalues: np.ndarray) -> dict:
    """Parameter gradients given loss gradients w.r.t. logits and values."""
    T, B, H = cache.h.shape
    g = zeros_like_params(params)
    hs2 = cache.h.reshape(T * B, H)
    dl2 = dlogits.reshape(T * B, -1)
    dv2 = dvalues.reshape(T * B, 1)
    g["Wpi"] = hs2.T @ dl2
    g["bpi"] = dl2.sum(axis=0)
    g["Wv"] = hs2.T @ dv2
    g["bv"] = dv2.sum(axis=0)
    dh_out = dlogits @ params["Wpi"].T + dvalues[..., None] * params["Wv"][:, 0]
    Wh = params["Wh"]
    dgx = np.empty((T, B, 3 * H))
    dh = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh + dh_out[t]
        h_in, r, z, n = cache.h_in[t], cache.r[t], cache.z[t], cache.n[t]
        dn = dh * (1.0 - z)
        dz = dh * (h_in - n)
        dan = dn * (1.0 - n * n)
        dar = dan * cache.gh_n[t] * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dgh = np.concatenate([dar, daz, dan * r], axis=1)
        dgx[t] = np.concatenate([dar, daz, dan], axis=1)
        g["Wh"] += h_in.T @ dgh
        g["bh"] += dgh.sum(axis=0)
        dh_in = dh * z + dgh @ Wh.T
        dh = dh_in * cache.keep[t][:, None]
    e2 = cache.e.reshape(T * B, H)
    dgx2 = dgx.reshape(T * B, 3 * H)
    g["Wx"] = e2.T @ dgx2
    g["bx"] = dgx2.sum(axis=0)
    de = (dgx2 @ params["Wx"].T) * (1.0 - e2 * e2)
    g["We"] = cache.x.reshape(T * B, -1).T @ de
    g["be"] = de.sum(axis=0)
    return g


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class Adam:
    """Adam with bias correction; state is a plain dict so it checkpoints as arrays."""

    def __init__(self, params: dict, lr: float, b1: float = 0.9, b2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in params:
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * grads[k]
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * grads[k] * grads[k]
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: v * scale for k, v in grads.items()}
    return grads, norm
