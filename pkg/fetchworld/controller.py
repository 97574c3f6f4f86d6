"""Heuristic low level controller: action decoding and kinematic integration."""
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import ControllerParams, SimConfig
from .const import (
    BRANCH_CROUCH,
    BRANCH_JUMP,
    BRANCH_MOVE,
    BRANCH_SIZES,
    BRANCH_STEER,
    ACTION_BRANCHES,
    GRAVITY,
    MOVING_SPEED_THRESHOLD,
)
from .exceptions import IndexOutOfRange
from .simcore import Vec3
from .world import WorldState

__all__ = [
    "ActionCommand",
    "ControllerParams",
    "decode_continuous",
    "decode_discrete",
    "forward_vector",
    "integrate",
]

MOVE_BACKWARD = 0
MOVE_NONE = 1
STEER_VALUES = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class ActionCommand:
    """Decoded request handed to the controller."""

    target_speed: float = 0.0
    steer: float = 0.0
    jump: bool = False
    crouch: bool = False


def forward_vector(yaw: float) -> Vec3:
    """Return the horizontal unit forward direction for a yaw angle."""
    return Vec3(math.sin(yaw), 0.0, math.cos(yaw))


def _wrap_angle(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def _speed_from_unit(f: float, params: ControllerParams) -> float:
    if f >= 0:
        return f * params.forward_velocity_max
    return f * params.backward_velocity_max


def decode_continuous(
    raw: Sequence[float], params: ControllerParams, cfg: SimConfig
) -> ActionCommand:
    """Decode four policy outputs in [-1, 1] into a command."""
    f, s, j, c = (float(v) for v in raw)
    f = float(np.clip(f + params.forward_action_bias, -1.0, 1.0))
    s, j, c = (float(np.clip(v, -1.0, 1.0)) for v in (s, j, c))
    if cfg.forward_only:
        f = max(f, 0.0)
    active = cfg.active_branches
    jump = BRANCH_JUMP in active and j > params.j0
    return ActionCommand(
        target_speed=_speed_from_unit(f, params) if BRANCH_MOVE in active else 0.0,
        steer=s if BRANCH_STEER in active else 0.0,
        jump=jump,
        crouch=BRANCH_CROUCH in active and c > params.c0 and not jump,
    )


def decode_discrete(
    branches: Sequence[int], params: ControllerParams, cfg: SimConfig
) -> ActionCommand:
    """Decode one index per branch (move, steer, jump, crouch) into a command."""
    indices = [int(b) for b in branches]
    if len(indices) != len(BRANCH_SIZES):
        raise IndexOutOfRange(f"expected {len(BRANCH_SIZES)} branches, got {len(indices)}")
    for name, index, size in zip(ACTION_BRANCHES, indices, BRANCH_SIZES):
        if not 0 <= index < size:
            raise IndexOutOfRange(f"{name} index {index} outside 0..{size - 1}")
    move, steer, jump_index, crouch_index = indices
    if cfg.forward_only and move == MOVE_BACKWARD:
        move = MOVE_NONE
    speeds = (
        -params.backward_velocity_max,
        0.0,
        params.walk_speed,
        params.trot_speed,
        params.forward_velocity_max,
    )
    active = cfg.active_branches
    jump = BRANCH_JUMP in active and jump_index == 1
    return ActionCommand(
        target_speed=speeds[move] if BRANCH_MOVE in active else 0.0,
        steer=STEER_VALUES[steer] if BRANCH_STEER in active else 0.0,
        jump=jump,
        crouch=BRANCH_CROUCH in active and crouch_index == 1 and not jump,
    )


def integrate(
    state: WorldState,
    cmd: ActionCommand,
    params: ControllerParams,
    dt: float,
    n_substeps: int,
) -> WorldState:
    """Advance the agent n_substeps physics steps of dt seconds under cmd."""
    yaw = state.agent_yaw
    x, y, z = state.agent_pos.as_tuple()
    vy = state.agent_vel.y
    airborne = state.airborne
    speed = state.agent_vel.x * math.sin(yaw) + state.agent_vel.z * math.cos(yaw)

    target = min(max(cmd.target_speed, -params.backward_velocity_max), params.forward_velocity_max)
    if cmd.crouch:
        target = min(max(target, -params.walk_speed), params.walk_speed)
    tau = params.velocity_time_constant
    blend = 1.0 if tau <= 0 else 1.0 - math.exp(-dt / tau)
    gravity = GRAVITY * params.gravity_multiplier
    yaw_rate = 0.0

    launched = cmd.jump and not airborne
    if launched:
        vy = params.jump_power
        airborne = True

    for _ in range(n_substeps):
        turn_speed = (
            params.moving_turn_speed
            if abs(speed) > MOVING_SPEED_THRESHOLD
            else params.stationary_turn_speed
        )
        yaw_rate = cmd.steer * math.radians(turn_speed)
        yaw = _wrap_angle(yaw + yaw_rate * dt)
        speed += (target - speed) * blend
        x += speed * math.sin(yaw) * dt
        z += speed * math.cos(yaw) * dt
        if airborne:
            if launched:
                launched = False
            else:
                vy -= gravity * dt
            y += vy * dt
            if y <= 0.0:
                y, vy, airborne = 0.0, 0.0, False

    return replace(
        state,
        agent_pos=Vec3(x, y, z),
        agent_yaw=yaw,
        agent_vel=Vec3(speed * math.sin(yaw), vy, speed * math.cos(yaw)),
        agent_ang_vel=Vec3(0.0, yaw_rate, 0.0),
        airborne=airborne,
        crouching=cmd.crouch,
    )
