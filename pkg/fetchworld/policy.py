"""Acting policies used by evaluation: trained network, random and scripted."""
import logging
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .config import POLICY_CHECKPOINT, POLICY_HEURISTIC, POLICY_RANDOM, SimConfig
from .const import ACTION_CONTINUOUS, BRANCH_SIZES, CONTINUOUS_ACTION_SIZE, OBS_VECTOR
from .exceptions import ArchitectureMismatch, ConfigError
from .neural import PolicyNetwork, greedy_action, load_checkpoint
from .simcore import Rng

_LOGGER = logging.getLogger(__name__)

D_TARGET = slice(0, 3)
D_FORWARD = slice(11, 14)
STOP_AND_TURN = math.radians(30.0)
DEADBAND = math.radians(2.0)


class Policy:
    """Maps a batch of observations to a batch of raw actions."""

    name = "policy"

    def __init__(self, sim_cfg: SimConfig):
        """Init."""
        self.sim_cfg = sim_cfg

    @property
    def continuous(self) -> bool:
        """True when actions are four floats."""
        return self.sim_cfg.action_kind == ACTION_CONTINUOUS

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Return one action per observation row."""
        raise NotImplementedError


class NetworkPolicy(Policy):
    """Greedy actions of a trained network."""

    name = POLICY_CHECKPOINT

    def __init__(self, sim_cfg: SimConfig, net: PolicyNetwork):
        """Init and check the network fits the scene."""
        super().__init__(sim_cfg)
        arch = net.architecture
        if (arch.obs_kind, arch.action_kind) != (sim_cfg.obs_kind, sim_cfg.action_kind):
            raise ArchitectureMismatch(
                f"policy was trained for {arch.obs_kind}/{arch.action_kind}, scene is "
                f"{sim_cfg.obs_kind}/{sim_cfg.action_kind}"
            )
        self.net = net.eval()

    @classmethod
    def from_checkpoint(cls, sim_cfg: SimConfig, path: Union[str, Path]) -> "NetworkPolicy":
        """Load a checkpoint file."""
        return cls(sim_cfg, load_checkpoint(path).to_module())

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Mean or per branch argmax."""
        with torch.no_grad():
            return greedy_action(self.net(obs))


class RandomPolicy(Policy):
    """Uniformly random actions."""

    name = POLICY_RANDOM

    def __init__(self, sim_cfg: SimConfig, rng: Rng):
        """Init."""
        super().__init__(sim_cfg)
        self.rng = rng

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Draw from [-1, 1) or uniformly over every branch."""
        rows = len(obs)
        if self.continuous:
            return self.rng.generator.uniform(-1.0, 1.0, size=(rows, CONTINUOUS_ACTION_SIZE))
        return np.stack(
            [self.rng.integers(0, size, size=rows) for size in BRANCH_SIZES], axis=1
        ).astype(np.int64)


def heading_error(d_target: np.ndarray, d_forward: np.ndarray) -> np.ndarray:
    """Signed yaw angle from forward to target, positive turning right."""
    cross = d_target[:, 0] * d_forward[:, 2] - d_target[:, 2] * d_forward[:, 0]
    dot = d_target[:, 0] * d_forward[:, 0] + d_target[:, 2] * d_forward[:, 2]
    return np.arctan2(cross, dot)


class HeuristicPolicy(Policy):
    """Turn toward the target, run when roughly facing it, never jump."""

    name = POLICY_HEURISTIC

    def __init__(self, sim_cfg: SimConfig):
        """Init; needs the vector observation."""
        super().__init__(sim_cfg)
        if sim_cfg.obs_kind != OBS_VECTOR:
            raise ArchitectureMismatch("the scripted heuristic reads vector observations")

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Proportional steering at full speed, stop and turn on large errors."""
        obs = np.asarray(obs, dtype=np.float64)
        error = heading_error(obs[:, D_TARGET], obs[:, D_FORWARD])
        steer = np.clip(error / STOP_AND_TURN, -1.0, 1.0)
        run = np.abs(error) <= STOP_AND_TURN
        if self.continuous:
            actions = np.zeros((len(obs), CONTINUOUS_ACTION_SIZE))
            actions[:, 0] = np.where(run, 1.0, 0.0)
            actions[:, 1] = steer
            actions[:, 2] = -1.0
            actions[:, 3] = -1.0
            return actions
        actions = np.zeros((len(obs), len(BRANCH_SIZES)), dtype=np.int64)
        actions[:, 0] = np.where(run, BRANCH_SIZES[0] - 1, 1)
        actions[:, 1] = np.where(error > DEADBAND, 2, np.where(error < -DEADBAND, 0, 1))
        return actions


def make_policy(
    kind: str,
    sim_cfg: SimConfig,
    rng: Rng,
    checkpoint: Optional[Union[str, Path]] = None,
) -> Policy:
    """Build an evaluation policy by kind."""
    _LOGGER.debug("Evaluation policy %s", kind)
    if kind == POLICY_RANDOM:
        return RandomPolicy(sim_cfg, rng)
    if kind == POLICY_HEURISTIC:
        return HeuristicPolicy(sim_cfg)
    if kind == POLICY_CHECKPOINT:
        if checkpoint is None:
            raise ConfigError("checkpoint policy needs a checkpoint path")
        return NetworkPolicy.from_checkpoint(sim_cfg, checkpoint)
    raise ConfigError(f"unknown policy {kind!r}")
