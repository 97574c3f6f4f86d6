"""Tests for the evaluation protocol and run comparison."""
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from fetchworld.config import EvalConfig, SimConfig, read_json
from fetchworld.const import DONE_OUT_OF_BOUNDS, TRAIN_LOG_COLUMNS
from fetchworld.exceptions import EmptyInput, IoError
from fetchworld.harness import (
    EvalReport,
    compare_runs,
    curves_svg,
    evaluate,
    final_score,
    load_curves,
    plot_runs,
    read_train_log,
    run_id_for,
)
from fetchworld.policy import HeuristicPolicy, Policy, RandomPolicy
from fetchworld.simcore import Rng

SMALL = SimConfig.from_dict({"arena_half_extent": 20.0, "max_episode_steps": 1000})


class StraightPolicy(Policy):
    """Runs forward forever."""

    name = "straight"

    def act(self, obs):
        return np.tile([1.0, 0.0, -1.0, -1.0], (len(obs), 1))


def _write_log(path, rewards):
    frame = pd.DataFrame(
        {
            column: np.arange(1, len(rewards) + 1) * 100 if column == "step" else 0.0
            for column in TRAIN_LOG_COLUMNS
        }
    )
    frame["mean_reward"] = rewards
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def test_zero_episodes_give_an_empty_report():
    report = evaluate(EvalConfig(max_episodes=0), SMALL, RandomPolicy(SMALL, Rng(0)), Rng(1))
    assert report.score == 0
    assert report.episodes == 0
    assert report.steps == 0


def test_step_cap():
    report = evaluate(EvalConfig(max_steps=50), SMALL, RandomPolicy(SMALL, Rng(0)), Rng(1))
    assert report.steps == 50
    assert report.episodes >= 1


def test_episode_cap_and_resets():
    cfg = EvalConfig(max_episodes=3, max_steps=100_000)
    report = evaluate(cfg, SMALL, StraightPolicy(SMALL), Rng(2))
    finished = [t for t in report.traces if t.done_reason != "running"]
    assert len(finished) == 3
    assert report.resets == sum(t.done_reason == DONE_OUT_OF_BOUNDS for t in finished)
    assert report.resets == 3
    assert report.score == sum(t.collected for t in report.traces)


def test_heuristic_beats_random():
    cfg = EvalConfig(max_steps=2000)
    heuristic = evaluate(cfg, SMALL, HeuristicPolicy(SMALL), Rng(3))
    random = evaluate(cfg, SMALL, RandomPolicy(SMALL, Rng(4)), Rng(3))
    assert heuristic.score >= 10
    assert heuristic.score > random.score


def test_evaluation_uses_the_test_scene():
    cfg = EvalConfig(n_collectibles=5, max_steps=1)
    report = evaluate(cfg, SMALL, RandomPolicy(SMALL, Rng(0)), Rng(0))
    assert report.steps == 1
    assert cfg.scene(SMALL).n_collectibles == 5
    assert cfg.scene(SMALL).respawn_on_collect


def test_evaluation_is_deterministic():
    cfg = EvalConfig(max_steps=300)
    a = evaluate(cfg, SMALL, RandomPolicy(SMALL, Rng(5)), Rng(6))
    b = evaluate(cfg, SMALL, RandomPolicy(SMALL, Rng(5)), Rng(6))
    assert a == b


def test_report_round_trip(tmp_path):
    report = evaluate(EvalConfig(max_steps=100), SMALL, HeuristicPolicy(SMALL), Rng(0))
    path = tmp_path / "eval_report.json"
    report.write(path)
    assert EvalReport.from_dict(read_json(path)) == report
    assert "traces" not in report.to_dict(include_traces=False)


def test_normalized_curve_peaks_at_one(tmp_path):
    curves = load_curves([_write_log(tmp_path / "a.csv", [-2.0, 1.0, 4.0])])
    assert curves["normalized_reward"].abs().max() == 1.0
    assert curves["normalized_reward"].tolist() == [-0.5, 0.25, 1.0]


def test_identical_logs_give_identical_curves(tmp_path):
    a = _write_log(tmp_path / "a.csv", [0.1, 0.5, 0.3])
    b = _write_log(tmp_path / "b.csv", [0.1, 0.5, 0.3])
    curves = load_curves([a, b])
    first = curves[curves.run_id == "a"]["normalized_reward"].tolist()
    second = curves[curves.run_id == "b"]["normalized_reward"].tolist()
    assert first == second


def test_run_ids():
    assert run_id_for(Path("runs/per_action/train_log.csv")) == "per_action"
    assert run_id_for(Path("sparse.csv")) == "sparse"


def test_duplicate_run_ids_are_made_unique(tmp_path):
    a = _write_log(tmp_path / "x" / "train_log.csv", [1.0])
    b = _write_log(tmp_path / "y" / "x" / "train_log.csv", [2.0])
    assert sorted(load_curves([a, b]).run_id.unique()) == ["x", "x_2"]


def test_final_score_uses_the_trailing_tenth():
    frame = pd.DataFrame({"mean_reward": np.arange(20, dtype=float)})
    assert final_score(frame) == pytest.approx(18.5)
    assert np.isnan(final_score(frame.iloc[:0]))


def test_compare_orders_the_runs(tmp_path):
    per_action = _write_log(tmp_path / "per_action" / "train_log.csv", [0.0, 0.5, 2.0])
    sparse = _write_log(tmp_path / "sparse" / "train_log.csv", [0.0, 0.0, 0.1])
    comparison = compare_runs([per_action, sparse], out_dir=tmp_path)
    assert comparison.ordering == [("per_action", "sparse", ">")]
    assert comparison.summary() == "per_action > sparse"
    text = (tmp_path / "curves.csv").read_text()
    assert text.startswith("# normalized_reward")
    assert text.splitlines()[1] == "step,run_id,mean_reward,normalized_reward"
    ordering = pd.read_csv(tmp_path / "ordering.csv")
    assert ordering.loc[0, "relation"] == ">"


def test_compare_evaluation_reports(tmp_path):
    for name, score in (("strong", 12), ("weak", 3)):
        EvalReport(policy=name, score=score).write(tmp_path / f"{name}.json")
    comparison = compare_runs([tmp_path / "weak.json", tmp_path / "strong.json"])
    assert comparison.ordering == [("weak", "strong", "<")]


def test_compare_needs_two_runs(tmp_path):
    with pytest.raises(EmptyInput):
        compare_runs([_write_log(tmp_path / "a.csv", [1.0])])
    with pytest.raises(EmptyInput):
        load_curves([])


def test_unreadable_logs(tmp_path):
    with pytest.raises(IoError):
        read_train_log(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("step,reward\n1,2\n")
    with pytest.raises(IoError):
        read_train_log(bad)


def test_plot_writes_one_polyline_per_run(tmp_path):
    a = _write_log(tmp_path / "a.csv", [0.1, 0.2, 0.4])
    b = _write_log(tmp_path / "b.csv", [0.3, 0.1, -0.2])
    svg = tmp_path / "out" / "curves.svg"
    svg.parent.mkdir()
    plot_runs([a, b], svg)
    text = svg.read_text()
    assert text.count("<polyline") == 2
    assert ">a</text>" in text
    assert ">b</text>" in text
    assert (svg.parent / "curves.csv").exists()
    assert (svg.parent / "ordering.csv").exists()


def test_svg_escapes_run_names():
    curves = pd.DataFrame(
        {
            "step": [1, 2],
            "run_id": ["a<b", "a<b"],
            "mean_reward": [0, 1],
            "normalized_reward": [0, 1],
        }
    )
    assert "a&lt;b" in curves_svg(curves)
