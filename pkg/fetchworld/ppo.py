"""Rollout collection, advantage estimation and clipped surrogate PPO updates."""
import copy
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch import nn

from .config import PpoConfig, RunConfig, write_json
from .const import (
    ACTION_CONTINUOUS,
    CHECKPOINT_SUFFIX,
    CRASH_SNAPSHOT,
    ENV_THREADS,
    NONFINITE_DUMP,
    REWARD_LOG,
    TRAIN_LOG,
    TRAIN_LOG_COLUMNS,
    WORLD_DUMP,
)
from .env import FetchEnv, StepResult
from .exceptions import FetchWorldError, LengthMismatch, NonFiniteLoss, TrainingAborted
from .neural import Architecture, PolicyNetwork, PolicyParams, save_checkpoint, sample_action
from .rewards import CuriosityModule
from .simcore import Rng

_LOGGER = logging.getLogger(__name__)

ADVANTAGE_EPSILON = 1e-8


def compute_gae(
    rewards: Sequence[float],
    values: Sequence[float],
    dones: Sequence[float],
    bootstrap: float,
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and returns of one segment."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not rewards.shape == values.shape == dones.shape:
        raise LengthMismatch(
            f"rewards {rewards.shape}, values {values.shape} and dones {dones.shape} differ"
        )
    advantages = np.zeros_like(rewards)
    last = 0.0
    next_value = float(bootstrap)
    for t in reversed(range(len(rewards))):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Shift to mean 0 and scale to std 1."""
    return (advantages - advantages.mean()) / (advantages.std() + ADVANTAGE_EPSILON)


@dataclass
class UpdateBatch:
    """Flat training samples, ordered by environment then step."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    curiosity_returns: Optional[np.ndarray] = None

    def __len__(self) -> int:
        """Number of samples."""
        return len(self.advantages)

    def subset(self, index: np.ndarray) -> "UpdateBatch":
        """Select rows."""
        return UpdateBatch(
            obs=self.obs[index],
            actions=self.actions[index],
            log_probs=self.log_probs[index],
            advantages=self.advantages[index],
            returns=self.returns[index],
            curiosity_returns=None
            if self.curiosity_returns is None
            else self.curiosity_returns[index],
        )


class RolloutBuffer:
    """Fixed size record of n_envs parallel streams, steps_per_env steps each."""

    def __init__(
        self,
        n_envs: int,
        steps_per_env: int,
        architecture: Architecture,
        time_horizon: int,
    ):
        """Init empty arrays."""
        self.n_envs = n_envs
        self.steps = steps_per_env
        self.time_horizon = time_horizon
        self.curiosity = architecture.value_heads > 1
        shape = (n_envs, steps_per_env)
        action_dtype = np.float64 if architecture.action_kind == ACTION_CONTINUOUS else np.int64
        self.obs = np.zeros(shape + architecture.observation_shape, dtype=np.float32)
        self.actions = np.zeros(shape + (architecture.action_size,), dtype=action_dtype)
        self.log_probs = np.zeros(shape)
        self.values = np.zeros(shape)
        self.curiosity_values = np.zeros(shape)
        self.rewards = np.zeros(shape)
        self.intrinsic = np.zeros(shape)
        self.dones = np.zeros(shape, dtype=bool)
        self.ends = np.zeros(shape, dtype=bool)
        self.end_values = np.zeros(shape)
        self.end_curiosity_values = np.zeros(shape)
        self.final_obs: Dict[Tuple[int, int], np.ndarray] = {}
        self.results: List[List[StepResult]] = []
        self.last_obs: Optional[np.ndarray] = None
        self.last_values = np.zeros(n_envs)
        self.last_curiosity_values = np.zeros(n_envs)
        self.size = 0

    @property
    def full(self) -> bool:
        """True once every stream holds steps_per_env records."""
        return self.size == self.steps

    def __len__(self) -> int:
        """Records stored."""
        return self.size * self.n_envs

    def add(
        self,
        obs: np.ndarray,
        actions: np.ndarray,
        log_probs: np.ndarray,
        values: np.ndarray,
        curiosity_values: Optional[np.ndarray],
        results: Sequence[StepResult],
    ):
        """Record one decision step of every environment."""
        t = self.size
        self.obs[:, t] = obs
        self.actions[:, t] = np.asarray(actions).reshape(self.n_envs, -1)
        self.log_probs[:, t] = log_probs
        self.values[:, t] = values
        if curiosity_values is not None:
            self.curiosity_values[:, t] = curiosity_values
        for e, result in enumerate(results):
            self.rewards[e, t] = result.reward.total
            self.dones[e, t] = result.done
            self.ends[e, t] = result.episode_over
            if result.episode_over:
                self.final_obs[(e, t)] = result.final_observation
        self.results.append(list(results))
        self.size += 1

    def set_end_values(self, env: int, value: float, curiosity_value: float = 0.0):
        """Value of the final observation of an episode ended at the latest step."""
        t = self.size - 1
        if self.dones[env, t]:
            value = curiosity_value = 0.0
        self.end_values[env, t] = value
        self.end_curiosity_values[env, t] = curiosity_value

    def close(self, last_obs: np.ndarray, last_values: np.ndarray, last_curiosity=None):
        """Store what follows the last record of every stream."""
        self.last_obs = np.asarray(last_obs)
        self.last_values = np.asarray(last_values, dtype=np.float64)
        if last_curiosity is not None:
            self.last_curiosity_values = np.asarray(last_curiosity, dtype=np.float64)

    def next_observations(self, env: int) -> np.ndarray:
        """Observation following every record of one stream."""
        nxt = np.empty_like(self.obs[env])
        nxt[:-1] = self.obs[env, 1:]
        nxt[-1] = self.last_obs[env]
        for t in np.flatnonzero(self.ends[env]):
            nxt[t] = self.final_obs[(env, int(t))]
        return nxt

    def segments(self, env: int) -> Iterable[Tuple[int, int]]:
        """Yield [start, stop) ranges cut at episode ends and every time_horizon."""
        start = 0
        for t in range(self.steps):
            if self.ends[env, t] or t - start + 1 == self.time_horizon or t == self.steps - 1:
                yield start, t + 1
                start = t + 1

    def advantages(
        self,
        rewards: np.ndarray,
        values: np.ndarray,
        end_values: np.ndarray,
        last_values: np.ndarray,
        gamma: float,
        lam: float,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Run GAE over every segment of every stream."""
        advantages = np.zeros_like(rewards)
        returns = np.zeros_like(rewards)
        for e in range(self.n_envs):
            for start, stop in self.segments(e):
                last = stop - 1
                if self.ends[e, last]:
                    bootstrap = end_values[e, last]
                elif stop < self.steps:
                    bootstrap = values[e, stop]
                else:
                    bootstrap = last_values[e]
                dones = np.zeros(stop - start)
                dones[-1] = float(self.dones[e, last])
                adv, ret = compute_gae(
                    rewards[e, start:stop], values[e, start:stop], dones, bootstrap, gamma, lam
                )
                advantages[e, start:stop] = adv
                returns[e, start:stop] = ret
        return advantages, returns

    def batch(self, cfg: PpoConfig, curiosity_gamma: float = 0.99) -> UpdateBatch:
        """Compute advantages and flatten into an UpdateBatch."""
        assert self.full, "buffer must be full before an update"
        adv, ret = self.advantages(
            self.rewards, self.values, self.end_values, self.last_values, cfg.gamma, cfg.gae_lambda
        )
        if cfg.normalize_advantages:
            adv = normalize_advantages(adv)
        curiosity_returns = None
        if self.curiosity:
            c_adv, c_ret = self.advantages(
                self.intrinsic,
                self.curiosity_values,
                self.end_curiosity_values,
                self.last_curiosity_values,
                curiosity_gamma,
                cfg.gae_lambda,
            )
            if cfg.normalize_advantages:
                c_adv = normalize_advantages(c_adv)
            adv = adv + c_adv
            curiosity_returns = c_ret.reshape(-1)
        count = self.n_envs * self.steps
        return UpdateBatch(
            obs=self.obs.reshape((count,) + self.obs.shape[2:]),
            actions=self.actions.reshape(count, -1),
            log_probs=self.log_probs.reshape(-1),
            advantages=adv.reshape(-1),
            returns=ret.reshape(-1),
            curiosity_returns=curiosity_returns,
        )


@dataclass
class LossTerms:
    """Loss of one minibatch and its parts."""

    loss: torch.Tensor
    policy_loss: float
    value_loss: float
    entropy: float
    clipped: int
    count: int


def clipped_surrogate(
    ratio: torch.Tensor, advantages: torch.Tensor, clip_epsilon: float
) -> torch.Tensor:
    """Mean of min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)."""
    clipped = torch.clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    return torch.min(ratio * advantages, clipped * advantages).mean()


def clip_count(ratio: torch.Tensor, clip_epsilon: float) -> int:
    """Number of samples whose ratio left the trust region."""
    return int(((ratio - 1.0).abs() > clip_epsilon).sum().item())


def ppo_loss(net: PolicyNetwork, batch: UpdateBatch, cfg: PpoConfig) -> LossTerms:
    """Clipped surrogate, value and entropy terms of a minibatch."""
    dtype = net.value_head.weight.dtype
    output = net(batch.obs)
    actions = torch.as_tensor(batch.actions)
    log_prob = output.log_prob(actions.to(dtype) if output.continuous else actions)
    old = torch.as_tensor(batch.log_probs, dtype=dtype)
    advantages = torch.as_tensor(batch.advantages, dtype=dtype)
    if log_prob.shape != old.shape or log_prob.shape != advantages.shape:
        raise LengthMismatch(
            f"log_prob {tuple(log_prob.shape)}, old log_prob {tuple(old.shape)} "
            f"and advantages {tuple(advantages.shape)} differ"
        )
    ratio = torch.exp(log_prob - old)
    policy_loss = -clipped_surrogate(ratio, advantages, cfg.clip_epsilon)
    value_loss = ((output.value - torch.as_tensor(batch.returns, dtype=dtype)) ** 2).mean()
    if output.curiosity_value is not None and batch.curiosity_returns is not None:
        target = torch.as_tensor(batch.curiosity_returns, dtype=dtype)
        value_loss = value_loss + ((output.curiosity_value - target) ** 2).mean()
    entropy = output.entropy().mean()
    loss = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_beta * entropy
    return LossTerms(
        loss=loss,
        policy_loss=float(policy_loss.item()),
        value_loss=float(value_loss.item()),
        entropy=float(entropy.item()),
        clipped=clip_count(ratio.detach(), cfg.clip_epsilon),
        count=len(batch),
    )


def make_optimizer(net: nn.Module, cfg: PpoConfig) -> torch.optim.Optimizer:
    """Adam with the configured epsilon."""
    return torch.optim.Adam(
        net.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=cfg.adam_epsilon
    )


@dataclass
class UpdateStats:
    """Averages over every minibatch of one update."""

    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def _dump_minibatch(batch: UpdateBatch, dump_dir: Optional[Path]) -> Optional[Path]:
    if dump_dir is None:
        return None
    path = Path(dump_dir) / NONFINITE_DUMP
    arrays = {k: v for k, v in asdict(batch).items() if v is not None}
    np.savez(path, **arrays)
    return path


def ppo_update(
    net: PolicyNetwork,
    optimizer: torch.optim.Optimizer,
    batch: UpdateBatch,
    cfg: PpoConfig,
    rng: Rng,
    learning_rate: Optional[float] = None,
    dump_dir: Optional[Path] = None,
) -> UpdateStats:
    """Run num_epochs passes of shuffled minibatch updates over the batch."""
    for group in optimizer.param_groups:
        group["lr"] = cfg.learning_rate if learning_rate is None else learning_rate
    net_state = copy.deepcopy(net.state_dict())
    optimizer_state = copy.deepcopy(optimizer.state_dict())
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    clipped = total = minibatches = 0
    for epoch in range(cfg.num_epochs):
        order = rng.permutation(len(batch))
        for start in range(0, len(batch), cfg.batch_size):
            minibatch = batch.subset(order[start : start + cfg.batch_size])
            terms = ppo_loss(net, minibatch, cfg)
            if not torch.isfinite(terms.loss):
                net.load_state_dict(net_state)
                optimizer.load_state_dict(optimizer_state)
                path = _dump_minibatch(minibatch, dump_dir)
                raise NonFiniteLoss(
                    f"loss {terms.loss.item()} in epoch {epoch}; parameters restored"
                    + (f", minibatch written to {path}" if path else "")
                )
            optimizer.zero_grad()
            terms.loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), cfg.grad_clip_norm)
            optimizer.step()
            sums["policy_loss"] += terms.policy_loss
            sums["value_loss"] += terms.value_loss
            sums["entropy"] += terms.entropy
            clipped += terms.clipped
            total += terms.count
            minibatches += 1
    return UpdateStats(
        policy_loss=sums["policy_loss"] / minibatches,
        value_loss=sums["value_loss"] / minibatches,
        entropy=sums["entropy"] / minibatches,
        clip_fraction=clipped / total,
    )


@dataclass(frozen=True)
class TrainStats:
    """One row of train_log.csv, emitted once per policy update."""

    step: int
    mean_reward: float
    mean_ep_len: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_frac: float
    lr: float

    def as_row(self) -> Dict[str, float]:
        """Columns in log order."""
        values = asdict(self)
        return {column: values[column] for column in TRAIN_LOG_COLUMNS}


def append_csv(path: Path, rows: List[Dict[str, float]], columns: Sequence[str]):
    """Append rows to a CSV file, writing the header on creation."""
    frame = pd.DataFrame(rows, columns=list(columns))
    frame.to_csv(path, mode="a", header=not path.exists(), index=False)


def worker_count(n_envs: int) -> int:
    """Size of the rollout worker pool, capped by FW_THREADS."""
    workers = min(n_envs, os.cpu_count() or 1)
    raw = os.environ.get(ENV_THREADS)
    if raw:
        try:
            workers = min(workers, max(1, int(raw)))
        except ValueError:
            _LOGGER.warning("Ignoring %s=%r, not an integer", ENV_THREADS, raw)
    return workers


REWARD_LOG_COLUMNS = (
    "step",
    "env",
    "shaped",
    "sparse",
    "forward_bias",
    "time",
    "boundary",
    "curiosity",
    "total",
)


@dataclass
class TrainResult:
    """Outcome of a training run."""

    checkpoint: Path
    stats: List[TrainStats] = field(default_factory=list)


class Trainer:
    """Collects rollouts from parallel environments and updates the policy."""

    def __init__(
        self,
        run: RunConfig,
        out_dir: Path,
        sinks: Sequence[Callable[[TrainStats], None]] = (),
        log_rewards: bool = False,
        dump_world: bool = False,
    ):
        """Init environments, networks and random streams from the run seed."""
        self.run = run
        self.cfg = run.ppo
        self.out_dir = Path(out_dir)
        self.sinks = list(sinks)
        self.log_rewards = log_rewards
        self.dump_world = dump_world

        root = Rng(run.sim.seed)
        self.architecture = Architecture.from_configs(run.sim, run.network, run.reward)
        self.net = PolicyNetwork(self.architecture, seed=root.spawn("policy").torch_seed())
        self.optimizer = make_optimizer(self.net, self.cfg)
        self.icm: Optional[CuriosityModule] = None
        if run.reward.curiosity_enabled:
            self.icm = CuriosityModule.from_config(
                run.reward,
                run.sim.obs_kind,
                run.sim.action_kind,
                seed=root.spawn("curiosity").torch_seed(),
            )
        self.action_rng = root.spawn("actions")
        self.minibatch_rng = root.spawn("minibatch")
        self.envs = [
            FetchEnv(run.sim, run.reward, root.spawn(i)) for i in range(self.cfg.n_parallel_envs)
        ]
        self.steps_per_env = self.cfg.buffer_size // self.cfg.n_parallel_envs
        self.step = 0
        self.updates = 0
        self.stats: List[TrainStats] = []

    def _step_envs(self, pool: ThreadPoolExecutor, actions: np.ndarray) -> List[StepResult]:
        futures = [pool.submit(env.step, actions[i]) for i, env in enumerate(self.envs)]
        results = []
        for i, future in enumerate(futures):
            try:
                results.append(future.result())
            except Exception as exc:
                self._write_crash_snapshot(i, exc)
                if isinstance(exc, FetchWorldError):
                    raise
                raise TrainingAborted(f"environment {i} failed: {exc}") from exc
        return results

    def _write_crash_snapshot(self, index: int, exc: BaseException):
        snapshot = {
            "step": self.step,
            "env_index": index,
            "error": f"{type(exc).__name__}: {exc}",
            "world": self.envs[index].dump_world(),
        }
        write_json(self.out_dir / CRASH_SNAPSHOT, snapshot)
        _LOGGER.debug("Wrote crash snapshot for environment %s", index)

    def _values(self, obs: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        with torch.no_grad():
            output = self.net(obs)
        curiosity = None
        if output.curiosity_value is not None:
            curiosity = output.curiosity_value.double().numpy()
        return output.value.double().numpy(), curiosity

    def collect(self, pool: ThreadPoolExecutor, obs: List[np.ndarray]):
        """Fill a rollout buffer; returns it with the observations to continue from."""
        buffer = RolloutBuffer(
            len(self.envs), self.steps_per_env, self.architecture, self.cfg.time_horizon
        )
        returns: List[float] = []
        lengths: List[int] = []
        for _ in range(self.steps_per_env):
            batch_obs = np.stack(obs)
            with torch.no_grad():
                output = self.net(batch_obs)
            actions, log_probs = sample_action(output, self.action_rng)
            curiosity_values = (
                None
                if output.curiosity_value is None
                else output.curiosity_value.double().numpy()
            )
            results = self._step_envs(pool, actions)
            buffer.add(
                batch_obs,
                actions,
                log_probs,
                output.value.double().numpy(),
                curiosity_values,
                results,
            )
            ended = [i for i, r in enumerate(results) if r.episode_over]
            truncated = [i for i in ended if results[i].truncated]
            if truncated:
                values, c_values = self._values(
                    np.stack([results[i].final_observation for i in truncated])
                )
                for k, i in enumerate(truncated):
                    buffer.set_end_values(i, values[k], 0.0 if c_values is None else c_values[k])
            for i in ended:
                returns.append(self.envs[i].episode_return)
                lengths.append(self.envs[i].episode_length)
            obs = [
                self.envs[i].reset() if i in ended else results[i].observation
                for i in range(len(self.envs))
            ]
            self.step += len(self.envs)
        last_values, last_curiosity = self._values(np.stack(obs))
        buffer.close(np.stack(obs), last_values, last_curiosity)
        return buffer, obs, returns, lengths

    def _curiosity_phase(self, buffer: RolloutBuffer):
        assert self.icm is not None
        next_obs = [buffer.next_observations(e) for e in range(buffer.n_envs)]
        for e in range(buffer.n_envs):
            buffer.intrinsic[e] = self.icm.intrinsic_reward(
                buffer.obs[e], buffer.actions[e], next_obs[e]
            )
        flat_obs = buffer.obs.reshape((-1,) + buffer.obs.shape[2:])
        flat_next = np.concatenate(next_obs)
        flat_actions = buffer.actions.reshape(len(flat_obs), -1)
        for _ in range(self.cfg.num_epochs):
            order = self.minibatch_rng.permutation(len(flat_obs))
            for start in range(0, len(order), self.cfg.batch_size):
                index = order[start : start + self.cfg.batch_size]
                self.icm.update(flat_obs[index], flat_actions[index], flat_next[index])

    def _log_rewards(self, buffer: RolloutBuffer, first_step: int):
        rows = []
        for t, results in enumerate(buffer.results):
            for e, result in enumerate(results):
                reward = result.reward.with_curiosity(float(buffer.intrinsic[e, t]))
                row = asdict(reward)
                row.update(step=first_step + t * buffer.n_envs + e, env=e)
                rows.append(row)
        append_csv(self.out_dir / REWARD_LOG, rows, REWARD_LOG_COLUMNS)

    def save(self) -> Path:
        """Write ckpt_<step>.fw for the current parameters."""
        path = self.out_dir / f"ckpt_{self.step}{CHECKPOINT_SUFFIX}"
        params = PolicyParams.from_module(self.net, step=self.step, seed=self.run.sim.seed)
        save_checkpoint(params, path)
        return path

    def train(self) -> TrainResult:
        """Alternate rollout and update phases until max_steps."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        log_path = self.out_dir / TRAIN_LOG
        if log_path.exists():
            log_path.unlink()
        reward_path = self.out_dir / REWARD_LOG
        if self.log_rewards and reward_path.exists():
            reward_path.unlink()

        obs = [env.reset() for env in self.envs]
        with ThreadPoolExecutor(max_workers=worker_count(len(self.envs))) as pool:
            while self.step < self.cfg.max_steps:
                first_step = self.step
                buffer, obs, returns, lengths = self.collect(pool, obs)
                if self.icm is not None:
                    self._curiosity_phase(buffer)
                if self.log_rewards:
                    self._log_rewards(buffer, first_step)
                learning_rate = self.cfg.learning_rate_at(first_step)
                update = ppo_update(
                    self.net,
                    self.optimizer,
                    buffer.batch(self.cfg, self.run.reward.curiosity_gamma),
                    self.cfg,
                    self.minibatch_rng,
                    learning_rate,
                    dump_dir=self.out_dir,
                )
                self.updates += 1
                if not returns:
                    _LOGGER.warning("No episode finished in the rollout ending at %s", self.step)
                stats = TrainStats(
                    step=self.step,
                    mean_reward=float(np.mean(returns)) if returns else math.nan,
                    mean_ep_len=float(np.mean(lengths)) if lengths else math.nan,
                    policy_loss=update.policy_loss,
                    value_loss=update.value_loss,
                    entropy=update.entropy,
                    clip_frac=update.clip_fraction,
                    lr=learning_rate,
                )
                self._emit(stats, log_path)
                if self.updates % self.cfg.checkpoint_interval == 0:
                    self.save()
        checkpoint = self.save()
        if self.dump_world:
            write_json(self.out_dir / WORLD_DUMP, [env.dump_world() for env in self.envs])
        _LOGGER.info("Training finished after %s steps, checkpoint %s", self.step, checkpoint)
        return TrainResult(checkpoint=checkpoint, stats=list(self.stats))

    def _emit(self, stats: TrainStats, log_path: Path):
        self.stats.append(stats)
        append_csv(log_path, [stats.as_row()], TRAIN_LOG_COLUMNS)
        _LOGGER.info(
            "Update %s step %s mean reward %.4f policy loss %.4f value loss %.4f",
            self.updates,
            stats.step,
            stats.mean_reward,
            stats.policy_loss,
            stats.value_loss,
        )
        for sink in self.sinks:
            sink(stats)


def train(
    run: RunConfig,
    out_dir: Path,
    sinks: Sequence[Callable[[TrainStats], None]] = (),
    log_rewards: bool = False,
    dump_world: bool = False,
) -> TrainResult:
    """Train a policy for a run configuration."""
    return Trainer(run, out_dir, sinks, log_rewards, dump_world).train()
