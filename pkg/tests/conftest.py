import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lobmarl.config import EnvConfig, SynthConfig
from lobmarl.data.store import build_episode_index
from lobmarl.data.synthetic import synth_generate

settings.register_profile(
    "repo", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def small_store():
    """Four 64x100-message episodes of default synthetic flow."""
    return synth_generate(SynthConfig(n_messages=25_600), seed=3)


@pytest.fixture(scope="session")
def env_cfg():
    return EnvConfig()


@pytest.fixture(scope="session")
def small_index(small_store, env_cfg):
    return build_episode_index(small_store, env_cfg.steps_per_episode,
                               env_cfg.messages_per_step, env_cfg.start_stride_steps)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
