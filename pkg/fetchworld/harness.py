"""Evaluation protocol (score and resets), run comparison and learning curves."""
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

from .config import EvalConfig, RewardConfig, SimConfig, read_json, write_json
from .const import CURVES_CSV, DONE_OUT_OF_BOUNDS, ORDERING_CSV
from .env import FetchEnv
from .exceptions import EmptyInput, IoError
from .policy import Policy
from .simcore import Rng

_LOGGER = logging.getLogger(__name__)

EPISODE_RUNNING = "running"
FINAL_WINDOW = 0.1
NORMALIZATION_NOTE = "normalized_reward = mean_reward / max(|mean_reward|) of the run"
CURVE_COLUMNS = ("step", "run_id", "mean_reward", "normalized_reward")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2")


@dataclass
class EpisodeTrace:
    """Summary of one evaluation episode."""

    index: int
    steps: int = 0
    collected: int = 0
    fetch_completions: int = 0
    episode_return: float = 0.0
    done_reason: str = EPISODE_RUNNING


@dataclass
class EvalReport:
    """Score (objects collected) and resets (out of bounds endings) of an evaluation."""

    policy: str
    score: int = 0
    fetch_completions: int = 0
    resets: int = 0
    episodes: int = 0
    steps: int = 0
    traces: List[EpisodeTrace] = field(default_factory=list)

    def to_dict(self, include_traces: bool = True) -> Dict[str, Any]:
        """Return a JSON compatible dict."""
        data = asdict(self)
        if not include_traces:
            data.pop("traces")
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        """Rebuild a report from eval_report.json."""
        traces = [EpisodeTrace(**t) for t in data.get("traces", [])]
        values = {k: v for k, v in data.items() if k != "traces"}
        return cls(traces=traces, **values)

    def write(self, path: Union[str, Path], include_traces: bool = True):
        """Write eval_report.json."""
        write_json(path, self.to_dict(include_traces))


def evaluate(
    eval_cfg: EvalConfig,
    sim_cfg: SimConfig,
    policy: Policy,
    rng: Rng,
    reward_cfg: Optional[RewardConfig] = None,
) -> EvalReport:
    """Run greedy episodes in the respawning scene until a cap is hit."""
    scene = eval_cfg.scene(sim_cfg)
    env = FetchEnv(scene, reward_cfg or RewardConfig.from_dict({}, scene), rng)
    report = EvalReport(policy=policy.name)
    trace: Optional[EpisodeTrace] = None
    obs = None
    finished = 0
    while finished < eval_cfg.max_episodes and report.steps < eval_cfg.max_steps:
        if trace is None:
            obs = env.reset()
            trace = EpisodeTrace(index=len(report.traces))
            report.traces.append(trace)
        action = policy.act(np.asarray(obs)[None])[0]
        result = env.step(action)
        obs = result.observation
        report.steps += 1
        trace.steps += 1
        trace.collected += len(result.outcome.collected_ids)
        trace.fetch_completions += int(result.outcome.reached_home)
        trace.episode_return += result.reward.total
        if result.episode_over:
            trace.done_reason = result.done_reason
            if result.done_reason == DONE_OUT_OF_BOUNDS:
                report.resets += 1
            finished += 1
            trace = None

    report.episodes = len(report.traces)
    report.score = sum(t.collected for t in report.traces)
    report.fetch_completions = sum(t.fetch_completions for t in report.traces)
    if not eval_cfg.record_traces:
        report.traces = []
    _LOGGER.info(
        "Evaluated %s: score %s, resets %s over %s episodes and %s steps",
        policy.name,
        report.score,
        report.resets,
        report.episodes,
        report.steps,
    )
    return report


def run_id_for(path: Path) -> str:
    """Name a run after its file, or its directory for standard log names."""
    if path.stem in ("train_log", "eval_report"):
        return path.parent.name or path.stem
    return path.stem


def _unique_ids(paths: Sequence[Path]) -> List[str]:
    ids: List[str] = []
    for path in paths:
        base = run_id_for(path)
        name, n = base, 1
        while name in ids:
            n += 1
            name = f"{base}_{n}"
        ids.append(name)
    return ids


def read_train_log(path: Union[str, Path]) -> pd.DataFrame:
    """Read the step and mean_reward columns of a training log."""
    try:
        frame = pd.read_csv(path, comment="#")
    except (
        OSError,
        UnicodeDecodeError,
        pd.errors.ParserError,
        pd.errors.EmptyDataError,
    ) as exc:
        raise IoError(f"cannot read training log {path}: {exc}") from exc
    missing = {"step", "mean_reward"} - set(frame.columns)
    if missing:
        raise IoError(f"{path}: missing columns {', '.join(sorted(missing))}")
    return frame[["step", "mean_reward"]].dropna()


def normalized_curve(frame: pd.DataFrame) -> pd.Series:
    """Divide a run's mean rewards by their max absolute value."""
    peak = frame["mean_reward"].abs().max()
    if not peak or not math.isfinite(peak):
        return frame["mean_reward"] * 0.0
    return frame["mean_reward"] / peak


def load_curves(paths: Sequence[Union[str, Path]]) -> pd.DataFrame:
    """Long format curves of several training logs."""
    if not paths:
        raise EmptyInput("no training logs given")
    paths = [Path(p) for p in paths]
    frames = []
    for path, run_id in zip(paths, _unique_ids(paths)):
        frame = read_train_log(path)
        frames.append(
            pd.DataFrame(
                {
                    "step": frame["step"].astype(int),
                    "run_id": run_id,
                    "mean_reward": frame["mean_reward"],
                    "normalized_reward": normalized_curve(frame),
                }
            )
        )
    return pd.concat(frames, ignore_index=True)[list(CURVE_COLUMNS)]


def final_score(frame: pd.DataFrame) -> float:
    """Mean reward over the trailing tenth of a curve."""
    if frame.empty:
        return math.nan
    window = max(1, int(math.ceil(len(frame) * FINAL_WINDOW)))
    return float(frame["mean_reward"].iloc[-window:].mean())


def _relation(a: float, b: float) -> str:
    if a > b:
        return ">"
    if a < b:
        return "<"
    return "="


@dataclass
class Comparison:
    """Normalized curves and the pairwise ordering of final scores."""

    curves: pd.DataFrame
    scores: Dict[str, float]
    ordering: List[Tuple[str, str, str]]

    def ordering_frame(self) -> pd.DataFrame:
        """Pairwise table with both scores."""
        return pd.DataFrame(
            [
                {
                    "run_a": a,
                    "run_b": b,
                    "relation": rel,
                    "score_a": self.scores[a],
                    "score_b": self.scores[b],
                }
                for a, b, rel in self.ordering
            ],
            columns=["run_a", "run_b", "relation", "score_a", "score_b"],
        )

    def summary(self) -> str:
        """One line per pair, e.g. 'per_action > sparse'."""
        return "\n".join(f"{a} {rel} {b}" for a, b, rel in self.ordering)


def compare_runs(
    inputs: Sequence[Union[str, Path]], out_dir: Optional[Union[str, Path]] = None
) -> Comparison:
    """Compare training logs (CSV) or evaluation reports (JSON)."""
    if len(inputs) < 2:
        raise EmptyInput(f"need at least two runs to compare, got {len(inputs)}")
    paths = [Path(p) for p in inputs]
    logs = [p for p in paths if p.suffix != ".json"]
    reports = [p for p in paths if p.suffix == ".json"]
    curves = load_curves(logs) if logs else pd.DataFrame(columns=list(CURVE_COLUMNS))
    scores: Dict[str, float] = {}
    for run_id, frame in curves.groupby("run_id", sort=False):
        scores[run_id] = final_score(frame)
    for path, run_id in zip(reports, _unique_ids(reports)):
        scores[run_id] = float(EvalReport.from_dict(read_json(path)).score)
    names = list(scores)
    ordering = [
        (a, b, _relation(scores[a], scores[b]))
        for i, a in enumerate(names)
        for b in names[i + 1 :]
    ]
    comparison = Comparison(curves=curves, scores=scores, ordering=ordering)
    if out_dir is not None:
        out = Path(out_dir)
        write_curves_csv(curves, out / CURVES_CSV)
        _write_frame(comparison.ordering_frame(), out / ORDERING_CSV)
    return comparison


def _write_frame(frame: pd.DataFrame, path: Path, note: Optional[str] = None):
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            if note:
                handle.write(f"# {note}\n")
            frame.to_csv(handle, index=False)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_curves_csv(curves: pd.DataFrame, path: Union[str, Path]):
    """Write curves.csv with the normalization recorded in a header comment."""
    _write_frame(curves[list(CURVE_COLUMNS)], Path(path), NORMALIZATION_NOTE)


def curves_svg(curves: pd.DataFrame, width: int = 640, height: int = 400) -> str:
    """Plain SVG 1.1 line plot: one polyline per run, legend as text."""
    left, right, top, bottom = 60, 160, 20, 40
    plot_w, plot_h = width - left - right, height - top - bottom
    steps = curves["step"].astype(float)
    x_min, x_max = (float(steps.min()), float(steps.max())) if len(steps) else (0.0, 1.0)
    if x_max <= x_min:
        x_max = x_min + 1.0
    y_min, y_max = -1.0, 1.0

    def sx(x: float) -> float:
        return left + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y: float) -> float:
        return top + (y_max - y) / (y_max - y_min) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{sy(0.0):.2f}" x2="{left + plot_w}" y2="{sy(0.0):.2f}" '
        'stroke="#bbbbbb" stroke-width="1"/>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" '
        'stroke="black" stroke-width="1"/>',
        f'<text x="{left + plot_w / 2:.0f}" y="{height - 10}" text-anchor="middle" '
        'font-size="12">step</text>',
        f'<text x="15" y="{top + plot_h / 2:.0f}" font-size="12" '
        f'transform="rotate(-90 15 {top + plot_h / 2:.0f})" text-anchor="middle">'
        "normalized reward</text>",
    ]
    for y in (-1.0, 0.0, 1.0):
        parts.append(
            f'<text x="{left - 6}" y="{sy(y) + 4:.2f}" text-anchor="end" '
            f'font-size="10">{y:g}</text>'
        )
    for i, (run_id, frame) in enumerate(curves.groupby("run_id", sort=False)):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(
            f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
            for x, y in zip(frame["step"], frame["normalized_reward"])
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )
        legend_y = top + 16 * (i + 1)
        parts.append(
            f'<text x="{left + plot_w + 12}" y="{legend_y}" fill="{color}" '
            f'font-size="12">{escape(str(run_id))}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_curves_svg(curves: pd.DataFrame, path: Union[str, Path]):
    """Write curves.svg."""
    try:
        Path(path).write_text(curves_svg(curves), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def plot_runs(inputs: Sequence[Union[str, Path]], svg_path: Union[str, Path]) -> pd.DataFrame:
    """Write curves.svg (and curves.csv beside it) for one or more training logs."""
    curves = load_curves(inputs)
    svg_path = Path(svg_path)
    write_curves_svg(curves, svg_path)
    write_curves_csv(curves, svg_path.with_name(CURVES_CSV))
    if len(inputs) >= 2:
        _write_frame(compare_runs(inputs).ordering_frame(), svg_path.with_name(ORDERING_CSV))
    return curves

