"""Per decision step reward and the curiosity (intrinsic reward) module."""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .config import RewardConfig
from .const import (
    ACTION_CONTINUOUS,
    BRANCH_SIZES,
    CONTINUOUS_ACTION_SIZE,
    OBS_VISUAL,
    REWARD_PER_ACTION,
    VECTOR_OBS_SIZE,
)
from .controller import ActionCommand
from .exceptions import DegenerateVector, ModelNotInitialized
from .simcore import Vec3, normalize
from .world import StepOutcome, WorldState

_LOGGER = logging.getLogger(__name__)

__all__ = [
    "CuriosityModule",
    "RewardBreakdown",
    "RewardConfig",
    "curiosity_reward",
    "step_reward",
]


@dataclass(frozen=True)
class RewardBreakdown:
    """Reward of one decision step split into its named parts."""

    shaped: float = 0.0
    sparse: float = 0.0
    forward_bias: float = 0.0
    time: float = 0.0
    boundary: float = 0.0
    curiosity: float = 0.0
    total: float = 0.0

    @property
    def extrinsic(self) -> float:
        """Total without the curiosity bonus."""
        return self.shaped + self.sparse + self.forward_bias + self.time + self.boundary

    def with_curiosity(self, curiosity: float) -> "RewardBreakdown":
        """Return a copy carrying a curiosity bonus."""
        return replace(self, curiosity=curiosity, total=self.extrinsic + curiosity)


def step_reward(
    prev: WorldState,
    outcome: StepOutcome,
    state: WorldState,
    target: Vec3,
    cfg: RewardConfig,
    command: Optional[ActionCommand] = None,
    curiosity: float = 0.0,
) -> RewardBreakdown:
    """Reward for the transition prev -> state; target is the one seeked during it."""
    del prev
    events = outcome.goal_events
    shaped = 0.0
    if cfg.kind == REWARD_PER_ACTION and not events:
        try:
            d_target = normalize(target - state.agent_pos)
            shaped = cfg.per_action_scale * state.agent_vel.dot(d_target)
        except DegenerateVector:
            shaped = 0.0
    sparse = cfg.goal_reward * events
    forward_bias = (
        cfg.forward_bias_bonus if command is not None and command.target_speed > 0 else 0.0
    )
    boundary = cfg.out_of_bounds_reward if outcome.went_out_of_bounds else 0.0
    curiosity = curiosity if cfg.curiosity_enabled else 0.0
    return RewardBreakdown(
        shaped=shaped,
        sparse=sparse,
        forward_bias=forward_bias,
        time=cfg.time_penalty,
        boundary=boundary,
        curiosity=curiosity,
        total=shaped + sparse + forward_bias + cfg.time_penalty + boundary + curiosity,
    )


def action_features(actions: torch.Tensor, action_kind: str) -> torch.Tensor:
    """Continuous actions as is, discrete branch indices one-hot encoded."""
    if action_kind == ACTION_CONTINUOUS:
        return actions.float()
    indices = actions.long()
    return torch.cat(
        [F.one_hot(indices[:, i], size).float() for i, size in enumerate(BRANCH_SIZES)],
        dim=1,
    )


class CuriosityModule(nn.Module):
    """Learned feature encoder with inverse and forward dynamics models."""

    def __init__(
        self,
        obs_kind: str,
        action_kind: str,
        encoding_size: int = 64,
        strength: float = 0.1,
        forward_weight: float = 0.2,
        learning_rate: float = 3e-4,
        seed: int = 0,
    ):
        """Init the three networks and their optimizer."""
        super().__init__()
        self.obs_kind = obs_kind
        self.action_kind = action_kind
        self.strength = strength
        self.forward_weight = forward_weight
        action_size = (
            CONTINUOUS_ACTION_SIZE if action_kind == ACTION_CONTINUOUS else sum(BRANCH_SIZES)
        )
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            if obs_kind == OBS_VISUAL:
                self.encoder = nn.Sequential(
                    nn.Conv2d(3, 16, 8, stride=4),
                    nn.SiLU(),
                    nn.Conv2d(16, 32, 4, stride=2),
                    nn.SiLU(),
                    nn.Flatten(),
                    nn.Linear(32 * 9 * 9, encoding_size),
                )
            else:
                self.encoder = nn.Sequential(
                    nn.Linear(VECTOR_OBS_SIZE, 128),
                    nn.SiLU(),
                    nn.Linear(128, encoding_size),
                )
            self.inverse_model = nn.Sequential(
                nn.Linear(2 * encoding_size, 256),
                nn.SiLU(),
                nn.Linear(256, action_size),
            )
            self.forward_model = nn.Sequential(
                nn.Linear(encoding_size + action_size, 256),
                nn.SiLU(),
                nn.Linear(256, encoding_size),
            )
        self.optimizer = torch.optim.Adam(self.parameters(), lr=learning_rate)

    @classmethod
    def from_config(
        cls, cfg: RewardConfig, obs_kind: str, action_kind: str, seed: int = 0
    ) -> "CuriosityModule":
        """Build from the reward section."""
        return cls(
            obs_kind,
            action_kind,
            encoding_size=cfg.curiosity_encoding_size,
            strength=cfg.curiosity_strength,
            forward_weight=cfg.curiosity_forward_weight,
            learning_rate=cfg.curiosity_learning_rate,
            seed=seed,
        )

    def encode(self, obs) -> torch.Tensor:
        """Map a batch of observations to features."""
        x = torch.as_tensor(np.asarray(obs), dtype=torch.float32)
        if self.obs_kind == OBS_VISUAL:
            x = x.permute(0, 3, 1, 2)
        return self.encoder(x)

    def forward_error(self, obs, actions, next_obs) -> torch.Tensor:
        """Per sample 0.5 * squared error of the predicted next features."""
        phi = self.encode(obs)
        phi_next = self.encode(next_obs).detach()
        act = action_features(torch.as_tensor(np.asarray(actions)), self.action_kind)
        predicted = self.forward_model(torch.cat((phi, act), dim=1))
        return 0.5 * ((predicted - phi_next) ** 2).sum(dim=1)

    def inverse_loss(self, obs, actions, next_obs) -> torch.Tensor:
        """Loss of predicting the action from consecutive features."""
        joint = torch.cat((self.encode(obs), self.encode(next_obs)), dim=1)
        predicted = self.inverse_model(joint)
        actions = torch.as_tensor(np.asarray(actions))
        if self.action_kind == ACTION_CONTINUOUS:
            return F.mse_loss(predicted, actions.float())
        losses = []
        offset = 0
        for i, size in enumerate(BRANCH_SIZES):
            logits = predicted[:, offset : offset + size]
            losses.append(F.cross_entropy(logits, actions[:, i].long()))
            offset += size
        return torch.stack(losses).sum()

    def intrinsic_reward(self, obs, actions, next_obs) -> np.ndarray:
        """Scaled forward model error per transition, float64."""
        with torch.no_grad():
            error = self.forward_error(obs, actions, next_obs)
        return self.strength * error.double().numpy()

    def update(self, obs, actions, next_obs) -> float:
        """One joint optimizer step on the forward and inverse losses."""
        forward_loss = self.forward_error(obs, actions, next_obs).mean()
        inverse_loss = self.inverse_loss(obs, actions, next_obs)
        loss = self.forward_weight * forward_loss + (1.0 - self.forward_weight) * inverse_loss
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        _LOGGER.debug(
            "Curiosity update forward %.5f inverse %.5f", forward_loss.item(), inverse_loss.item()
        )
        return float(loss.item())


def curiosity_reward(
    obs_t, action_t: Sequence[float], obs_t1, icm: Optional[CuriosityModule]
) -> float:
    """Intrinsic reward of a single transition."""
    if icm is None:
        raise ModelNotInitialized("curiosity module has not been created")
    reward = icm.intrinsic_reward(
        np.asarray(obs_t)[None], np.asarray(action_t)[None], np.asarray(obs_t1)[None]
    )
    return float(reward[0])
