"""Clipped-surrogate PPO loss, its analytic gradient and the minibatch update."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import network as net


class Batch(NamedTuple):
    """One agent type's rollout, time-major: ``[T, N, ...]``.

    ``resets[t]`` flags observations that start an episode; ``h0`` is the
    hidden state before the first step.
    """

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    resets: np.ndarray
    h0: np.ndarray


def normalize(adv: np.ndarray) -> np.ndarray:
    mu = adv.mean()
    sd = adv.std()
    # a constant batch can show a roundoff-sized std; treat it as zero
    if sd > 1e-10 * max(1.0, abs(mu)):
        return (adv - mu) / sd
    return adv - mu


def loss_and_grads(params: dict, mb: Batch, clip_eps: float, vf_coef: float, ent_coef: float,
                   normalize_adv: bool = True, need_grads: bool = True):
    """Total loss ``pg + vf_coef * value - ent_coef * entropy`` and its parameter gradient."""
    logits, values, _, cache = net.forward(params, mb.obs, mb.h0, mb.resets, with_cache=True)
    adv = normalize(mb.advantages) if normalize_adv else mb.advantages
    n = adv.size
    logp_all = net.log_softmax(logits)
    p = np.exp(logp_all)
    a = mb.actions[..., None]
    logp = np.take_along_axis(logp_all, a, axis=-1)[..., 0]
    ratio = np.exp(logp - mb.logp)
    surr1 = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr2 = clipped * adv
    pg = -np.mean(np.minimum(surr1, surr2))
    verr = values - mb.returns
    vloss = 0.5 * np.mean(verr * verr)
    ent_each = -(p * logp_all).sum(axis=-1)
    ent = np.mean(ent_each)
    loss = pg + vf_coef * vloss - ent_coef * ent
    metrics = {
        "policy_loss": float(pg), "value_loss": float(vloss), "entropy": float(ent),
        "approx_kl": float(np.mean((ratio - 1.0) - (logp - mb.logp))),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip_eps)), "loss": float(loss),
    }
    if not need_grads or not np.isfinite(loss):
        return loss, None, metrics
    # gradient flows through the unclipped branch unless the clipped one is smaller and saturated
    inside = (ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)
    active = (surr1 <= surr2) | inside
    dlogp = np.where(active, -adv * ratio / n, 0.0)
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, a, 1.0, axis=-1)
    dlogits = dlogp[..., None] * (onehot - p)
    dlogits += (ent_coef / n) * p * (logp_all + ent_each[..., None])
    dvalues = vf_coef * verr / n
    grads = net.backward(params, cache, dlogits, dvalues)
    return loss, grads, metrics


def _diagnose(params, mb, metrics) -> str:
    bad = [k for k, v in params.items() if not np.all(np.isfinite(v))]
    return (f"non-finite PPO loss: metrics={metrics}, non-finite params={bad}, "
            f"obs finite={bool(np.all(np.isfinite(mb.obs)))}, "
            f"adv range=({np.min(mb.advantages)}, {np.max(mb.advantages)}), "
            f"returns range=({np.min(mb.returns)}, {np.max(mb.returns)})")


def ppo_update(params: dict, opt: net.Adam, batch: Batch, *, epochs: int, minibatches: int,
               clip_eps: float, vf_coef: float, ent_coef: float, max_grad_norm: float,
               rng: np.random.Generator) -> dict:
    """Run ``epochs`` passes of ``minibatches`` sequence minibatches; mutates ``params``/``opt``.

    Minibatches split the sequence axis ``N`` so every minibatch keeps whole
    recurrent trajectories. Returns metrics averaged over all minibatches.
    """
    N = batch.obs.shape[1]
    k = max(1, min(minibatches, N))
    sums: dict[str, float] = {}
    count = 0
    for _ in range(epochs):
        perm = rng.permutation(N)
        for idx in np.array_split(perm, k):
            idx = np.sort(idx)
            mb = Batch(batch.obs[:, idx], batch.actions[:, idx], batch.logp[:, idx],
                       batch.values[:, idx], batch.advantages[:, idx], batch.returns[:, idx],
                       batch.resets[:, idx], batch.h0[idx])
            loss, grads, m = loss_and_grads(params, mb, clip_eps, vf_coef, ent_coef)
            if not np.isfinite(loss):
                raise FloatingPointError(_diagnose(params, mb, m))
            grads, norm = net.clip_by_global_norm(grads, max_grad_norm)
            opt.step(params, grads)
            m["grad_norm"] = norm
            for key, v in m.items():
                sums[key] = sums.get(key, 0.0) + v
            count += 1
    return {key: v / count for key, v in sums.items()}
