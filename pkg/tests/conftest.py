"""Shared fixtures."""
import pytest

from fetchworld.config import RewardConfig, RunConfig, SimConfig
from fetchworld.simcore import Rng


@pytest.fixture
def sim_cfg():
    """Default full size arena with one cube."""
    return SimConfig()


@pytest.fixture
def reward_cfg(sim_cfg):
    """Reward section derived from the default sim section."""
    return RewardConfig.from_dict({}, sim_cfg)


@pytest.fixture
def rng():
    """Fixed random stream."""
    return Rng(1234)


@pytest.fixture
def tiny_run():
    """Vector run small enough for a couple of updates in a test."""
    return RunConfig.from_dict(
        {
            "sim": {"arena_half_extent": 15.0, "max_episode_steps": 40, "seed": 7},
            "ppo": {
                "buffer_size": 64,
                "batch_size": 32,
                "time_horizon": 16,
                "n_parallel_envs": 2,
                "max_steps": 128,
                "num_epochs": 2,
            },
            "network": {"hidden_units": 16},
        }
    )
