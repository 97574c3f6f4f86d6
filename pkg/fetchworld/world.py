"""Arena, collectibles and the collect/fetch task state machine."""
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Tuple

from .config import SimConfig
from .const import (
    AGENT_SPAWN_MARGIN,
    COIN_DIAMETER,
    COLLECTION_RADIUS,
    CUBE_EDGE,
    DONE_NONE,
    DONE_OUT_OF_BOUNDS,
    DONE_TASK_COMPLETE,
    DONE_TIMEOUT,
    HOME_RADIUS,
    KIND_COIN,
    MAX_SPAWN_ATTEMPTS,
    MIN_SPAWN_DISTANCE,
    OBJECT_SPAWN_MARGIN,
    PHASE_RETURN,
    PHASE_SEEK,
    TASK_FETCH,
)
from .exceptions import NoTarget, SpawnFailed, SteppedTerminalEpisode
from .simcore import Rng, Vec3, rng_uniform

_LOGGER = logging.getLogger(__name__)


def half_height(kind: str) -> float:
    """Return the resting height of a collectible center."""
    return COIN_DIAMETER / 2 if kind == KIND_COIN else CUBE_EDGE / 2


@dataclass(frozen=True)
class Collectible:
    """One collectible object resting on the ground."""

    id: int
    kind: str
    position: Vec3
    alive: bool = True


@dataclass(frozen=True)
class AgentKinematics:
    """Pose and motion of the agent."""

    pos: Vec3 = Vec3()
    yaw: float = 0.0
    vel: Vec3 = Vec3()
    ang_vel: Vec3 = Vec3()
    airborne: bool = False
    crouching: bool = False


@dataclass(frozen=True)
class WorldState:
    """Full simulator state of one environment instance."""

    agent_pos: Vec3 = Vec3()
    agent_yaw: float = 0.0
    agent_vel: Vec3 = Vec3()
    agent_ang_vel: Vec3 = Vec3()
    airborne: bool = False
    crouching: bool = False
    collectibles: Tuple[Collectible, ...] = ()
    task_phase: str = PHASE_SEEK
    home_pos: Vec3 = Vec3()
    step_count: int = 0
    episode_done: bool = False
    done_reason: str = DONE_NONE

    @property
    def kinematics(self) -> AgentKinematics:
        """Return the agent part of the state."""
        return AgentKinematics(
            pos=self.agent_pos,
            yaw=self.agent_yaw,
            vel=self.agent_vel,
            ang_vel=self.agent_ang_vel,
            airborne=self.airborne,
            crouching=self.crouching,
        )

    def with_kinematics(self, kin: AgentKinematics) -> "WorldState":
        """Return a copy with the agent part replaced."""
        return replace(
            self,
            agent_pos=kin.pos,
            agent_yaw=kin.yaw,
            agent_vel=kin.vel,
            agent_ang_vel=kin.ang_vel,
            airborne=kin.airborne,
            crouching=kin.crouching,
        )

    @property
    def alive_collectibles(self) -> List[Collectible]:
        """Collectibles still in the scene."""
        return [c for c in self.collectibles if c.alive]

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON compatible snapshot."""
        return {
            "agent_pos": list(self.agent_pos.as_tuple()),
            "agent_yaw": self.agent_yaw,
            "agent_vel": list(self.agent_vel.as_tuple()),
            "airborne": self.airborne,
            "crouching": self.crouching,
            "collectibles": [
                {
                    "id": c.id,
                    "kind": c.kind,
                    "position": list(c.position.as_tuple()),
                    "alive": c.alive,
                }
                for c in self.collectibles
            ],
            "task_phase": self.task_phase,
            "home_pos": list(self.home_pos.as_tuple()),
            "step_count": self.step_count,
            "episode_done": self.episode_done,
            "done_reason": self.done_reason,
        }


@dataclass(frozen=True)
class StepOutcome:
    """Events of one decision step."""

    collected_ids: Tuple[int, ...] = ()
    went_out_of_bounds: bool = False
    reached_home: bool = False
    timed_out: bool = False

    @property
    def goal_events(self) -> int:
        """Number of events that earn the goal reward."""
        return len(self.collected_ids) + int(self.reached_home)


def border_distance(pos: Vec3, cfg: SimConfig) -> Tuple[float, float]:
    """Return the position normalized by the arena half extent."""
    return (pos.x / cfg.arena_half_extent, pos.z / cfg.arena_half_extent)


def is_outside(pos: Vec3, cfg: SimConfig) -> bool:
    """Return true when the infinity norm of the border distance reaches 1."""
    bx, bz = border_distance(pos, cfg)
    return max(abs(bx), abs(bz)) >= 1.0


def _spawn_collectible(
    idx: int, cfg: SimConfig, rng: Rng, agent_pos: Vec3
) -> Collectible:
    limit = OBJECT_SPAWN_MARGIN * cfg.arena_half_extent
    y = half_height(cfg.collectible_kind)
    for _ in range(MAX_SPAWN_ATTEMPTS):
        x = rng_uniform(rng, -limit, limit)
        z = rng_uniform(rng, -limit, limit)
        position = Vec3(x, y, z)
        if position.horizontal_distance(agent_pos) >= MIN_SPAWN_DISTANCE:
            return Collectible(id=idx, kind=cfg.collectible_kind, position=position)
    raise SpawnFailed(
        f"no spawn point {MIN_SPAWN_DISTANCE} m away from the agent in an arena "
        f"of half extent {cfg.arena_half_extent}"
    )


def reset(cfg: SimConfig, rng: Rng) -> WorldState:
    """Start a new episode at random agent and collectible positions."""
    limit = AGENT_SPAWN_MARGIN * cfg.arena_half_extent
    agent_pos = Vec3(rng_uniform(rng, -limit, limit), 0.0, rng_uniform(rng, -limit, limit))
    yaw = rng_uniform(rng, -math.pi, math.pi)
    collectibles = tuple(
        _spawn_collectible(i, cfg, rng, agent_pos) for i in range(cfg.n_collectibles)
    )
    return WorldState(
        agent_pos=agent_pos,
        agent_yaw=yaw,
        collectibles=collectibles,
        task_phase=PHASE_SEEK,
        home_pos=agent_pos,
    )


def world_step(
    state: WorldState, kinematics: AgentKinematics, cfg: SimConfig, rng: Rng
) -> Tuple[WorldState, StepOutcome]:
    """Apply the moved agent and resolve collection, boundary and timeout."""
    if state.episode_done:
        raise SteppedTerminalEpisode(
            f"episode already ended ({state.done_reason}) at step {state.step_count}"
        )
    pos = kinematics.pos
    phase = state.task_phase
    collected: List[int] = []
    collectibles = list(state.collectibles)
    reached_home = False
    task_complete = False

    if phase == PHASE_RETURN and pos.horizontal_distance(state.home_pos) < HOME_RADIUS:
        reached_home = True
        if cfg.respawn_on_collect:
            phase = PHASE_SEEK
        else:
            task_complete = True

    if phase == PHASE_SEEK and not reached_home:
        for i, item in enumerate(collectibles):
            if item.alive and pos.horizontal_distance(item.position) < COLLECTION_RADIUS:
                collected.append(item.id)
                if cfg.respawn_on_collect:
                    collectibles[i] = _spawn_collectible(item.id, cfg, rng, pos)
                    _LOGGER.debug("Respawned collectible %s", item.id)
                else:
                    collectibles[i] = replace(item, alive=False)
        if collected:
            if cfg.task == TASK_FETCH:
                phase = PHASE_RETURN
            elif not any(c.alive for c in collectibles):
                task_complete = True

    step_count = state.step_count + 1
    out_of_bounds = is_outside(pos, cfg)
    timed_out = step_count >= cfg.max_episode_steps

    done_reason = DONE_NONE
    if out_of_bounds:
        done_reason = DONE_OUT_OF_BOUNDS
    elif task_complete:
        done_reason = DONE_TASK_COMPLETE
    elif timed_out:
        done_reason = DONE_TIMEOUT

    new_state = replace(
        state.with_kinematics(kinematics),
        collectibles=tuple(collectibles),
        task_phase=phase,
        step_count=step_count,
        episode_done=done_reason != DONE_NONE,
        done_reason=done_reason,
    )
    outcome = StepOutcome(
        collected_ids=tuple(collected),
        went_out_of_bounds=out_of_bounds,
        reached_home=reached_home,
        timed_out=done_reason == DONE_TIMEOUT,
    )
    return new_state, outcome


def current_target(state: WorldState) -> Vec3:
    """Return the nearest alive collectible, or home on the way back."""
    if state.task_phase == PHASE_RETURN:
        return state.home_pos
    best = None
    best_distance = math.inf
    for item in state.collectibles:
        if not item.alive:
            continue
        distance = state.agent_pos.horizontal_distance(item.position)
        if distance < best_distance:
            best, best_distance = item, distance
    if best is None:
        raise NoTarget("no alive collectible to seek")
    return best.position
