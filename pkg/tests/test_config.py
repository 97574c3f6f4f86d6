"""Tests for configuration loading and validation."""
import json

import pytest

from fetchworld.config import (
    CONTINUOUS_BATCH_SIZE,
    DISCRETE_BATCH_SIZE,
    FORWARD_BIAS_BONUS,
    ControllerParams,
    PpoConfig,
    RewardConfig,
    RunConfig,
    SimConfig,
    apply_overrides,
    load_run_config,
    parse_override,
    preset_names,
    read_json,
)
from fetchworld.const import ACTION_DISCRETE, REWARD_SPARSE
from fetchworld.exceptions import ConfigError, IoError


def test_defaults_follow_the_published_settings():
    run = RunConfig()
    assert run.sim.arena_half_extent == 55.0
    assert run.sim.physics_dt == 0.02
    assert run.sim.decision_interval == 5
    assert run.sim.max_episode_steps == 5000
    assert run.sim.controller == ControllerParams()
    assert run.sim.controller.forward_velocity_max == 9.0
    assert run.sim.controller.backward_velocity_max == 2.0
    assert run.reward.time_penalty == -0.0005
    assert run.ppo.buffer_size == 40960
    assert run.ppo.batch_size == CONTINUOUS_BATCH_SIZE
    assert run.ppo.gamma == 0.995
    assert run.network.hidden_units == 512


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="arena_size"):
        SimConfig.from_dict({"arena_size": 10})


def test_out_of_range_value_is_rejected():
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"n_collectibles": 0})
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"obs_kind": "lidar"})


def test_json_round_trip():
    cfg = SimConfig.from_dict({"n_collectibles": 24, "task": "fetch"})
    assert SimConfig.from_json(cfg.to_json()) == cfg


def test_bad_json_is_a_config_error():
    with pytest.raises(ConfigError):
        SimConfig.from_json("{not json")


def test_discrete_batch_size_default():
    run = RunConfig.from_dict({"sim": {"action_kind": ACTION_DISCRETE}})
    assert run.ppo.batch_size == DISCRETE_BATCH_SIZE


def test_continuous_with_discrete_batch_size_needs_override():
    with pytest.raises(ConfigError, match="allow_batch_mismatch"):
        PpoConfig.from_dict({"batch_size": DISCRETE_BATCH_SIZE})
    cfg = PpoConfig.from_dict({"batch_size": DISCRETE_BATCH_SIZE, "allow_batch_mismatch": True})
    assert cfg.batch_size == DISCRETE_BATCH_SIZE


def test_buffer_must_divide_into_minibatches():
    with pytest.raises(ConfigError, match="multiple"):
        PpoConfig.from_dict({"buffer_size": 5000, "batch_size": 512})


def test_time_horizon_cannot_exceed_buffer():
    with pytest.raises(ConfigError, match="time_horizon"):
        PpoConfig.from_dict({"buffer_size": 512, "batch_size": 512, "time_horizon": 1000})


def test_learning_rate_decays_linearly():
    cfg = PpoConfig.from_dict({"max_steps": 1000})
    assert cfg.learning_rate_at(0) == pytest.approx(3e-4)
    assert cfg.learning_rate_at(500) == pytest.approx(1.5e-4)
    assert cfg.learning_rate_at(2000) == 0.0


def test_reward_section_follows_sim():
    sim = SimConfig.from_dict({"reward_kind": REWARD_SPARSE, "forward_bias": True})
    reward = RewardConfig.from_dict({}, sim)
    assert reward.kind == REWARD_SPARSE
    assert reward.forward_bias_bonus == FORWARD_BIAS_BONUS
    explicit = RewardConfig.from_dict({"kind": "per_action", "forward_bias_bonus": 0.0}, sim)
    assert explicit.kind == "per_action"
    assert explicit.forward_bias_bonus == 0.0


@pytest.mark.parametrize(
    "item, expected",
    [
        ("sim.n_collectibles=10", (("sim", "n_collectibles"), 10)),
        ("sim.task=fetch", (("sim", "task"), "fetch")),
        ("reward.curiosity_enabled=true", (("reward", "curiosity_enabled"), True)),
        ("ppo.learning_rate=1e-4", (("ppo", "learning_rate"), 1e-4)),
    ],
)
def test_parse_override(item, expected):
    assert parse_override(item) == expected


def test_parse_override_needs_equals():
    with pytest.raises(ConfigError):
        parse_override("sim.n_collectibles")


def test_apply_overrides_does_not_touch_input():
    data = {"sim": {"n_collectibles": 1}}
    result = apply_overrides(data, ["sim.n_collectibles=3", "sim.controller.j0=0.7"])
    assert data == {"sim": {"n_collectibles": 1}}
    assert result == {"sim": {"n_collectibles": 3, "controller": {"j0": 0.7}}}


def test_precedence_file_then_overrides_then_seed(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"sim": {"seed": 1, "n_collectibles": 2}}))
    run = load_run_config(path, ["sim.seed=2", "sim.n_collectibles=5"], seed=3)
    assert run.sim.seed == 3
    assert run.sim.n_collectibles == 5


def test_missing_config_file(tmp_path):
    with pytest.raises(IoError):
        load_run_config(tmp_path / "nope.json")
    with pytest.raises(IoError):
        read_json(tmp_path / "nope.json")


def test_top_level_must_be_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_resolved_config_round_trips(tmp_path):
    run = load_run_config("desk_vector", seed=7)
    run.write(tmp_path / "resolved.json")
    assert RunConfig.from_dict(read_json(tmp_path / "resolved.json")) == run


@pytest.mark.parametrize("name", preset_names())
def test_presets_validate(name):
    run = load_run_config(name)
    assert run.ppo.buffer_size % run.ppo.batch_size == 0


def test_experiment_grid_is_shipped():
    names = set(preset_names())
    assert {f"exp{i}" for i in range(1, 12)} <= names
    assert {"desk_vector", "desk_sparse", "desk_multi", "desk_pathology", "desk_visual"} <= names


def test_generalisation_presets_change_the_test_scene():
    exp7 = load_run_config("exp7")
    assert exp7.sim.n_collectibles == 24
    assert exp7.eval.scene(exp7.sim).n_collectibles == 1
    exp10 = load_run_config("exp10")
    scene = exp10.eval.scene(exp10.sim)
    assert exp10.sim.arena_half_extent == 55.0
    assert scene.arena_half_extent == 27.5
    assert scene.respawn_on_collect
