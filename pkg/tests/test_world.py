"""Tests for the arena, collectibles and task state machine."""
from dataclasses import replace

import numpy as np
import pytest

from fetchworld.config import SimConfig
from fetchworld.const import (
    DONE_NONE,
    DONE_OUT_OF_BOUNDS,
    DONE_TASK_COMPLETE,
    DONE_TIMEOUT,
    PHASE_RETURN,
    PHASE_SEEK,
    TASK_FETCH,
)
from fetchworld.exceptions import NoTarget, SpawnFailed, SteppedTerminalEpisode
from fetchworld.simcore import Rng, Vec3
from fetchworld.world import (
    Collectible,
    WorldState,
    border_distance,
    current_target,
    is_outside,
    reset,
    world_step,
)


def _moved(state, pos):
    return replace(state.kinematics, pos=pos)


def _scene(*positions, **sim):
    cfg = SimConfig.from_dict(sim)
    state = WorldState(
        collectibles=tuple(
            Collectible(id=i, kind="cube", position=p) for i, p in enumerate(positions)
        )
    )
    return cfg, state


def test_reset_is_deterministic():
    cfg = SimConfig.from_dict({"seed": 7})
    assert reset(cfg, Rng(7)) == reset(cfg, Rng(7))


def test_reset_spawns_every_collectible_alive():
    state = reset(SimConfig.from_dict({"n_collectibles": 24}), Rng(3))
    assert len(state.alive_collectibles) == 24
    assert [c.id for c in state.collectibles] == list(range(24))


def test_reset_respects_spawn_constraints():
    cfg = SimConfig.from_dict({"n_collectibles": 5})
    rng = Rng(1)
    for _ in range(200):
        state = reset(cfg, rng)
        bx, bz = border_distance(state.agent_pos, cfg)
        assert max(abs(bx), abs(bz)) < 0.9
        assert state.home_pos == state.agent_pos
        assert state.task_phase == PHASE_SEEK
        for item in state.collectibles:
            assert abs(item.position.x) <= 0.95 * 55.0
            assert abs(item.position.z) <= 0.95 * 55.0
            assert item.position.y == 0.5
            assert item.position.horizontal_distance(state.agent_pos) >= 3.0


def test_spawn_fails_in_a_tiny_arena():
    with pytest.raises(SpawnFailed):
        reset(SimConfig.from_dict({"arena_half_extent": 1.0}), Rng(0))


def test_leaving_the_arena_ends_the_episode():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0))
    new, outcome = world_step(state, _moved(state, Vec3(56.0, 0.0, 0.0)), cfg, Rng(0))
    assert new.done_reason == DONE_OUT_OF_BOUNDS
    assert new.episode_done
    assert outcome.went_out_of_bounds


def test_border_is_the_infinity_norm():
    cfg = SimConfig()
    assert border_distance(Vec3(55.0, 0.0, 0.0), cfg) == (1.0, 0.0)
    assert is_outside(Vec3(55.0, 0.0, 0.0), cfg)
    assert is_outside(Vec3(-10.0, 0.0, -55.5), cfg)
    assert not is_outside(Vec3(54.9, 0.0, 54.9), cfg)


def test_collect_within_radius():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0), Vec3(-20.0, 0.5, 0.0))
    new, outcome = world_step(state, _moved(state, Vec3(9.0, 0.0, 0.0)), cfg, Rng(0))
    assert outcome.collected_ids == (0,)
    assert outcome.goal_events == 1
    assert not new.collectibles[0].alive
    assert new.done_reason == DONE_NONE


def test_collecting_the_last_object_completes_the_task():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0))
    new, _ = world_step(state, _moved(state, Vec3(10.5, 0.0, 0.5)), cfg, Rng(0))
    assert new.done_reason == DONE_TASK_COMPLETE


def test_collected_object_respawns_when_asked():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0), respawn_on_collect=True)
    new, outcome = world_step(state, _moved(state, Vec3(10.0, 0.0, 1.0)), cfg, Rng(0))
    assert outcome.collected_ids == (0,)
    assert new.collectibles[0].alive
    assert new.collectibles[0].position != Vec3(10.0, 0.5, 0.0)
    assert new.collectibles[0].position.horizontal_distance(Vec3(10.0, 0.0, 1.0)) >= 3.0
    assert not new.episode_done


def test_fetch_collect_then_return_home():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0), task=TASK_FETCH)
    rng = Rng(0)
    state, outcome = world_step(state, _moved(state, Vec3(10.0, 0.0, 0.0)), cfg, rng)
    assert outcome.collected_ids == (0,)
    assert state.task_phase == PHASE_RETURN
    assert current_target(state) == state.home_pos
    state, outcome = world_step(state, _moved(state, Vec3(5.0, 0.0, 0.0)), cfg, rng)
    assert not outcome.reached_home
    state, outcome = world_step(state, _moved(state, Vec3(1.0, 0.0, 0.0)), cfg, rng)
    assert outcome.reached_home
    assert outcome.goal_events == 1
    assert state.done_reason == DONE_TASK_COMPLETE


def test_fetch_with_respawn_keeps_going():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0), task=TASK_FETCH, respawn_on_collect=True)
    rng = Rng(0)
    state, _ = world_step(state, _moved(state, Vec3(10.0, 0.0, 0.0)), cfg, rng)
    state, outcome = world_step(state, _moved(state, Vec3(0.5, 0.0, 0.0)), cfg, rng)
    assert outcome.reached_home
    assert state.task_phase == PHASE_SEEK
    assert not state.episode_done


def test_timeout():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0), max_episode_steps=3)
    rng = Rng(0)
    for _ in range(3):
        state, outcome = world_step(state, state.kinematics, cfg, rng)
    assert state.done_reason == DONE_TIMEOUT
    assert outcome.timed_out
    assert state.step_count == 3


def test_out_of_bounds_wins_over_timeout():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0), max_episode_steps=1)
    new, outcome = world_step(state, _moved(state, Vec3(0.0, 0.0, 60.0)), cfg, Rng(0))
    assert new.done_reason == DONE_OUT_OF_BOUNDS
    assert not outcome.timed_out


def test_stepping_a_finished_episode_fails():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0))
    state, _ = world_step(state, _moved(state, Vec3(60.0, 0.0, 0.0)), cfg, Rng(0))
    with pytest.raises(SteppedTerminalEpisode):
        world_step(state, state.kinematics, cfg, Rng(0))


def test_step_count_and_kinematics_are_applied():
    cfg, state = _scene(Vec3(10.0, 0.5, 0.0))
    new, _ = world_step(state, _moved(state, Vec3(1.0, 0.0, 2.0)), cfg, Rng(0))
    assert new.step_count == 1
    assert new.agent_pos == Vec3(1.0, 0.0, 2.0)


def test_current_target_single_candidate():
    _, state = _scene(Vec3(10.0, 0.5, 0.0))
    assert current_target(state) == Vec3(10.0, 0.5, 0.0)


def test_current_target_is_the_nearest():
    _, state = _scene(Vec3(0.0, 0.5, 20.0), Vec3(-5.0, 0.5, 0.0))
    assert current_target(state) == Vec3(-5.0, 0.5, 0.0)


def test_current_target_without_objects():
    _, state = _scene(Vec3(10.0, 0.5, 0.0))
    gone = replace(state, collectibles=(replace(state.collectibles[0], alive=False),))
    with pytest.raises(NoTarget):
        current_target(gone)


def _random_collectibles(rng, count, limit=50.0):
    return tuple(
        Collectible(
            id=i,
            kind="cube",
            position=Vec3(rng.uniform(-limit, limit), 0.5, rng.uniform(-limit, limit)),
            alive=bool(rng.random() < 0.7),
        )
        for i in range(count)
    )


def test_current_target_matches_exhaustive_search():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        agent = Vec3(rng.uniform(-50.0, 50.0), 0.0, rng.uniform(-50.0, 50.0))
        items = _random_collectibles(rng, int(rng.integers(1, 8)))
        phase = PHASE_RETURN if rng.random() < 0.2 else PHASE_SEEK
        home = Vec3(rng.uniform(-50.0, 50.0), 0.0, rng.uniform(-50.0, 50.0))
        state = WorldState(
            agent_pos=agent, collectibles=items, task_phase=phase, home_pos=home
        )
        alive = [c for c in items if c.alive]
        if phase == PHASE_RETURN:
            assert current_target(state) == home
        elif not alive:
            with pytest.raises(NoTarget):
                current_target(state)
        else:
            distances = [agent.horizontal_distance(c.position) for c in alive]
            assert current_target(state) == alive[int(np.argmin(distances))].position


def _walk(cfg, steps, seed):
    """Alternate random moves and visits to alive collectibles; yield alive counts."""
    rng = np.random.default_rng(seed)
    world_rng = Rng(seed)
    state = reset(cfg, world_rng)
    limit = 0.9 * cfg.arena_half_extent
    yield len(state.alive_collectibles)
    for _ in range(steps):
        alive = state.alive_collectibles
        if alive and rng.random() < 0.5:
            goal = alive[int(rng.integers(len(alive)))].position
            pos = Vec3(goal.x, 0.0, goal.z)
        else:
            pos = Vec3(rng.uniform(-limit, limit), 0.0, rng.uniform(-limit, limit))
        state, _ = world_step(state, _moved(state, pos), cfg, world_rng)
        yield len(state.alive_collectibles)
        if state.episode_done:
            return


def test_respawn_keeps_the_alive_count():
    cfg = SimConfig.from_dict({"n_collectibles": 24, "respawn_on_collect": True})
    counts = list(_walk(cfg, 500, seed=4))
    assert len(counts) == 501
    assert set(counts) == {24}


def test_alive_count_never_increases_without_respawn():
    cfg = SimConfig.from_dict({"n_collectibles": 24})
    counts = list(_walk(cfg, 500, seed=4))
    assert all(later <= earlier for earlier, later in zip(counts, counts[1:]))
    assert counts[-1] < counts[0]


def test_snapshot_is_json_friendly():
    state = reset(SimConfig(), Rng(2))
    snapshot = state.to_dict()
    assert snapshot["step_count"] == 0
    assert len(snapshot["collectibles"]) == 1
    assert len(snapshot["agent_pos"]) == 3
