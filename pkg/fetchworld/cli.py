"""Command line entry point: train, eval, plot, render-obs and inspect-checkpoint."""
import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import RunConfig, load_run_config, preset_names
from .const import (
    CURVES_SVG,
    ENV_THREADS,
    EVAL_REPORT,
    RESOLVED_CONFIG,
    STARTUP_MESSAGE,
    VERSION,
)
from .env import FetchEnv
from .exceptions import FetchWorldError, IoError
from .harness import evaluate, plot_runs
from .neural import inspect_checkpoint
from .policy import make_policy
from .ppo import train
from .sensors import observe_visual, write_ppm
from .simcore import Rng

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_OUT = "runs/latest"
INTERNAL_ERROR = "internal_error"


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--config",
        help="run config file, or the name of a shipped preset "
        f"({', '.join(preset_names()) or 'none'})",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted override such as sim.n_collectibles=10; repeatable",
    )
    parser.add_argument("--seed", type=int, help="run seed, overrides the config")
    parser.add_argument(
        "--out", default=DEFAULT_OUT, help=f"output directory (default {DEFAULT_OUT})"
    )


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog="fetchworld",
        description="Headless character-control sandbox: train and evaluate PPO agents.",
        epilog=f"{ENV_THREADS} caps the number of rollout worker threads.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (default INFO)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy with PPO")
    _add_config_flags(p_train)
    p_train.add_argument(
        "--log-rewards", action="store_true", help="write per step reward parts to rewards.csv"
    )
    p_train.add_argument(
        "--dump-world", action="store_true", help="write the final world states as JSON"
    )

    p_eval = sub.add_parser("eval", help="evaluate a policy (score and resets)")
    _add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint file of the policy to evaluate")
    p_eval.add_argument(
        "--policy", choices=["checkpoint", "random", "heuristic"], help="policy kind"
    )
    p_eval.add_argument("--episodes", type=int, help="episode cap")
    p_eval.add_argument("--steps", type=int, help="decision step cap")

    p_plot = sub.add_parser("plot", help="plot normalized learning curves")
    p_plot.add_argument(
        "--in", dest="inputs", nargs="+", required=True, metavar="CSV", help="train logs"
    )
    p_plot.add_argument(
        "--out", default=DEFAULT_OUT, help="SVG path, or a directory for curves.svg"
    )

    p_render = sub.add_parser("render-obs", help="dump the camera observation as PPM")
    _add_config_flags(p_render)
    p_render.add_argument(
        "--step", type=int, default=0, help="random policy steps before the capture"
    )

    p_inspect = sub.add_parser("inspect-checkpoint", help="list a checkpoint manifest")
    p_inspect.add_argument("checkpoint", help="checkpoint file")
    return parser


def _prepare(args) -> RunConfig:
    run = load_run_config(args.config, args.overrides, args.seed)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc.strerror or exc}") from exc
    run.write(out / RESOLVED_CONFIG)
    return run


def cmd_train(args) -> int:
    """Train and write train_log.csv plus checkpoints."""
    run = _prepare(args)
    result = train(run, Path(args.out), log_rewards=args.log_rewards, dump_world=args.dump_world)
    print(result.checkpoint)
    return 0


def cmd_eval(args) -> int:
    """Evaluate and write eval_report.json."""
    run = _prepare(args)
    flags = {
        "policy": args.policy,
        "checkpoint": args.checkpoint,
        "max_episodes": args.episodes,
        "max_steps": args.steps,
    }
    eval_cfg = dataclasses.replace(
        run.eval, **{k: v for k, v in flags.items() if v is not None}
    )
    if eval_cfg != run.eval:
        run = dataclasses.replace(run, eval=eval_cfg)
        run.write(Path(args.out) / RESOLVED_CONFIG)
    rng = Rng(run.sim.seed)
    scene = eval_cfg.scene(run.sim)
    policy = make_policy(eval_cfg.policy, scene, rng.spawn("policy"), eval_cfg.checkpoint)
    report = evaluate(eval_cfg, run.sim, policy, rng.spawn("eval"), run.reward)
    report.write(Path(args.out) / EVAL_REPORT)
    print(f"score {report.score} resets {report.resets} episodes {report.episodes}")
    return 0


def cmd_plot(args) -> int:
    """Write curves.svg and curves.csv."""
    out = Path(args.out)
    if out.suffix.lower() != ".svg":
        out = out / CURVES_SVG
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out.parent}: {exc.strerror or exc}") from exc
    plot_runs(args.inputs, out)
    print(out)
    return 0


def cmd_render_obs(args) -> int:
    """Write obs_<step>.ppm of the camera view after some random steps."""
    run = _prepare(args)
    rng = Rng(run.sim.seed)
    env = FetchEnv(run.sim, run.reward, rng.spawn(0))
    env.reset()
    policy = make_policy("random", run.sim, rng.spawn("policy"))
    obs = env.observe()
    for _ in range(args.step):
        result = env.step(policy.act(np.asarray(obs)[None])[0])
        obs = result.observation if not result.episode_over else env.reset()
    path = Path(args.out) / f"obs_{args.step}.ppm"
    write_ppm(observe_visual(env.state, env.rig, run.sim), path)
    print(path)
    return 0


def cmd_inspect(args) -> int:
    """Print the checkpoint manifest."""
    header = inspect_checkpoint(args.checkpoint)
    print(f"format_version {header['format_version']}")
    for key, value in sorted(header.get("architecture", {}).items()):
        print(f"architecture.{key} {value}")
    for key, value in sorted(header.get("metadata", {}).items()):
        print(f"metadata.{key} {value}")
    total = 0
    for entry in header.get("tensors", []):
        shape = "x".join(str(s) for s in entry["shape"]) or "scalar"
        print(f"{entry['name']} {shape} offset={entry['offset']} count={entry['count']}")
        total += int(entry["count"])
    print(f"total {total}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "plot": cmd_plot,
    "render-obs": cmd_render_obs,
    "inspect-checkpoint": cmd_inspect,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch and map errors to exit codes."""
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    _LOGGER.info(STARTUP_MESSAGE)
    try:
        return COMMANDS[args.command](args)
    except FetchWorldError as err:
        message = " ".join(str(err).split())
        print(f"{err.error_code}: {message}", file=sys.stderr)
        return err.exit_code
    except Exception as err:  # pylint: disable=broad-exception-caught
        _LOGGER.debug("Unexpected failure", exc_info=True)
        message = " ".join(str(err).split()) or type(err).__name__
        print(f"{INTERNAL_ERROR}: {message}", file=sys.stderr)
        return 1


def main(argv: Optional[List[str]] = None):
    """Console script entry."""
    sys.exit(run(argv))
