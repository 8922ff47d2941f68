import numpy as np


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value):
    """Generalised advantage estimates over a ``[T, ...]`` rollout.

    ``dones[t]`` marks that the transition at ``t`` ended its episode, which
    cuts both the bootstrap and the advantage recursion. ``last_value`` is
    the value of the observation following the final step.
    Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    adv = np.zeros_like(rewards)
    next_v = np.asarray(last_value, dtype=np.float64)
    run = np.zeros_like(next_v)
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * next_v * notdone[t] - values[t]
        run = delta + gamma * lam * notdone[t] * run
        adv[t] = run
        next_v = values[t]
    return adv, adv + values
