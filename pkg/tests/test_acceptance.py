"""Desk-scale learning runs on the shipped presets.

These take minutes to hours on a desktop CPU and are deselected by default.
Run them with ``pytest -m slow`` or ``pytest -m extended``.
"""
import dataclasses

import numpy as np
import pandas as pd
import pytest

from fetchworld.config import load_run_config
from fetchworld.const import TRAIN_LOG
from fetchworld.harness import evaluate
from fetchworld.policy import HeuristicPolicy, NetworkPolicy, RandomPolicy
from fetchworld.ppo import train
from fetchworld.simcore import Rng

EVAL_STEPS = 100_000
SEED = 11


def _trained(preset, out):
    run = load_run_config(preset, seed=SEED)
    result = train(run, out)
    return run, result


def _score(run, policy):
    eval_cfg = dataclasses.replace(run.eval, max_episodes=10**9, max_steps=EVAL_STEPS)
    return evaluate(eval_cfg, run.sim, policy, Rng(SEED).spawn("eval"), run.reward).score


def _baselines(run):
    random_score = _score(run, RandomPolicy(run.sim, Rng(SEED).spawn("policy")))
    return random_score, _score(run, HeuristicPolicy(run.sim))


def _windows(result, fraction=0.2):
    rewards = np.array([s.mean_reward for s in result.stats], dtype=float)
    rewards = rewards[np.isfinite(rewards)]
    size = max(2, int(len(rewards) * fraction))
    return rewards[:size], rewards[-size:]


def _standard_error(first, last):
    return np.sqrt(first.var(ddof=1) / len(first) + last.var(ddof=1) / len(last))


def _improved(result) -> bool:
    first, last = _windows(result)
    return last.mean() > first.mean() + 3.0 * _standard_error(first, last)


@pytest.mark.slow
def test_per_action_reward_learns(tmp_path):
    run, result = _trained("desk_vector", tmp_path)
    trained = _score(run, NetworkPolicy.from_checkpoint(run.sim, result.checkpoint))
    random_score, heuristic_score = _baselines(run)
    assert trained >= 10 * max(random_score, 1)
    assert trained >= 0.25 * heuristic_score


@pytest.mark.slow
def test_sparse_reward_single_object_does_not_learn(tmp_path):
    run, result = _trained("desk_sparse", tmp_path)
    trained = _score(run, NetworkPolicy.from_checkpoint(run.sim, result.checkpoint))
    random_score, _ = _baselines(run)
    assert trained <= 2 * max(random_score, 1)


@pytest.mark.slow
def test_sparse_reward_learns_with_many_objects(tmp_path):
    run, result = _trained("desk_multi", tmp_path)
    trained = _score(run, NetworkPolicy.from_checkpoint(run.sim, result.checkpoint))
    random_score, _ = _baselines(run)
    assert trained >= 5 * max(random_score, 1)


@pytest.mark.slow
def test_short_decision_interval_stalls(tmp_path):
    _, result = _trained("desk_pathology", tmp_path)
    first, last = _windows(result)
    assert abs(last.mean() - first.mean()) <= 3.0 * _standard_error(first, last)


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["desk_pathology_forward_only", "desk_pathology_forward_bias"])
def test_forward_mitigations_restore_learning(tmp_path, preset):
    _, result = _trained(preset, tmp_path)
    assert _improved(result)


@pytest.mark.slow
def test_training_is_reproducible(tmp_path):
    _, first = _trained("desk_vector", tmp_path / "a")
    _, second = _trained("desk_vector", tmp_path / "b")
    log_a = pd.read_csv(tmp_path / "a" / TRAIN_LOG)
    pd.testing.assert_frame_equal(log_a, pd.read_csv(tmp_path / "b" / TRAIN_LOG))
    assert (tmp_path / "a" / TRAIN_LOG).read_bytes() == (tmp_path / "b" / TRAIN_LOG).read_bytes()
    assert first.checkpoint.read_bytes() == second.checkpoint.read_bytes()


@pytest.mark.extended
def test_visual_observations_learn(tmp_path):
    _, result = _trained("desk_visual", tmp_path)
    assert _improved(result)
