"""Counter-based random numbers for the environment kernels.

Each environment owns a 64-bit key derived from ``(global seed, env index)``
by ``numpy.random.SeedSequence``. Inside the numba kernels a uniform variate
is a pure function of ``(key, episode counter, step, draw index)``, hashed
with the SplitMix64 finaliser, so results never depend on how environments
are distributed over workers or in which order they are stepped.
"""
import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# step counter used for draws made at reset time
RESET_STEP = -1


@njit(cache=True, inline="always")
def mix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def uniform(key, episode, step, i):
    """Uniform in [0, 1) for the counter ``(episode, step, i)`` under ``key``."""
    h = mix64(key ^ np.uint64(episode))
    h = mix64(h ^ np.uint64(step & 0xFFFFFFFFFFFF))
    h = mix64(h ^ np.uint64(i))
    return float(h >> _S11) * _INV53


def env_keys(seed: int, n_envs: int, offset: int = 0) -> np.ndarray:
    """One key per environment index ``offset .. offset + n_envs - 1``."""
    return np.array(
        [np.random.SeedSequence([seed, offset + i]).generate_state(1, np.uint64)[0]
         for i in range(n_envs)], dtype=np.uint64)


def seed_key(seed: int) -> np.uint64:
    return np.random.SeedSequence([seed]).generate_state(1, np.uint64)[0]
