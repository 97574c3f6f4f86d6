"""One environment instance: controller, world, sensors and rewards wired together."""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from .config import RewardConfig, SimConfig
from .const import (
    ACTION_CONTINUOUS,
    DONE_NONE,
    DONE_TIMEOUT,
    OBS_VISUAL,
)
from .controller import ActionCommand, decode_continuous, decode_discrete, integrate
from .exceptions import NoTarget, SteppedTerminalEpisode
from .rewards import RewardBreakdown, step_reward
from .sensors import CameraRig, observe_vector, observe_visual
from .simcore import Rng, Vec3
from .world import StepOutcome, WorldState, current_target, reset, world_step

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepResult:
    """Everything one decision step produces."""

    observation: np.ndarray
    reward: RewardBreakdown
    done: bool
    truncated: bool
    outcome: StepOutcome
    command: ActionCommand
    done_reason: str = DONE_NONE
    final_observation: Optional[np.ndarray] = None

    @property
    def episode_over(self) -> bool:
        """True on terminal or truncated steps; the caller must reset."""
        return self.done or self.truncated


class FetchEnv:
    """Single agent arena; the caller resets after an episode ends."""

    def __init__(
        self,
        sim_cfg: SimConfig,
        reward_cfg: RewardConfig,
        rng: Rng,
        rig: Optional[CameraRig] = None,
    ):
        """Init."""
        self.sim_cfg = sim_cfg
        self.reward_cfg = reward_cfg
        self.rng = rng
        self.rig = rig or CameraRig()
        self._state: Optional[WorldState] = None
        self._target: Optional[Vec3] = None
        self.episode_return = 0.0
        self.episode_length = 0

    @property
    def state(self) -> WorldState:
        """Current world state."""
        if self._state is None:
            raise SteppedTerminalEpisode("environment has not been reset")
        return self._state

    def reset(self) -> np.ndarray:
        """Start a new episode and return its first observation."""
        self._state = reset(self.sim_cfg, self.rng)
        self._target = current_target(self._state)
        self.episode_return = 0.0
        self.episode_length = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        """Encode the current state for the policy."""
        state = self.state
        if self.sim_cfg.obs_kind == OBS_VISUAL:
            return observe_visual(state, self.rig, self.sim_cfg)
        return observe_vector(state, self._observation_target(), self.sim_cfg).to_array()

    def _observation_target(self) -> Vec3:
        try:
            self._target = current_target(self.state)
        except NoTarget:
            pass
        assert self._target is not None
        return self._target

    def decode(self, action) -> ActionCommand:
        """Turn a raw policy action into a controller command."""
        params = self.sim_cfg.controller
        if self.sim_cfg.action_kind == ACTION_CONTINUOUS:
            return decode_continuous(action, params, self.sim_cfg)
        return decode_discrete(action, params, self.sim_cfg)

    def step(self, action) -> StepResult:
        """Advance one decision step."""
        prev = self.state
        target = self._observation_target()
        command = self.decode(action)
        moved = integrate(
            prev,
            command,
            self.sim_cfg.controller,
            self.sim_cfg.physics_dt,
            self.sim_cfg.decision_interval,
        )
        state, outcome = world_step(prev, moved.kinematics, self.sim_cfg, self.rng)
        self._state = state
        reward = step_reward(prev, outcome, state, target, self.reward_cfg, command)
        self.episode_return += reward.total
        self.episode_length += 1
        observation = self.observe()
        over = state.episode_done
        if over:
            _LOGGER.debug(
                "Episode ended (%s) after %s steps, return %.4f",
                state.done_reason,
                state.step_count,
                self.episode_return,
            )
        return StepResult(
            observation=observation,
            reward=reward,
            done=over and state.done_reason != DONE_TIMEOUT,
            truncated=state.done_reason == DONE_TIMEOUT,
            outcome=outcome,
            command=command,
            done_reason=state.done_reason,
            final_observation=observation if over else None,
        )

    def dump_world(self) -> Dict[str, Any]:
        """Return a JSON compatible snapshot of the current state."""
        snapshot = self.state.to_dict()
        snapshot["rng_seed"] = self.rng.seed
        return snapshot
