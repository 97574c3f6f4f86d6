"""Configuration sections, their schemas and JSON loading."""
import copy
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

import voluptuous as vol

from .const import (
    ACTION_BRANCHES,
    ACTION_CONTINUOUS,
    ACTION_DISCRETE,
    ACTION_KINDS,
    COLLECTIBLE_KINDS,
    DEFAULT_ARENA_HALF_EXTENT,
    DEFAULT_BORDER_WIDTH,
    DEFAULT_DECISION_INTERVAL,
    DEFAULT_MAX_EPISODE_STEPS,
    DEFAULT_PARALLEL_ENVS,
    DEFAULT_PHYSICS_DT,
    DEFAULT_SEED,
    KIND_CUBE,
    OBS_KINDS,
    OBS_VECTOR,
    OBS_VISUAL,
    REWARD_KINDS,
    REWARD_PER_ACTION,
    TASK_COLLECT,
    TASKS,
)
from .exceptions import ConfigError, IoError

_LOGGER = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).parent / "presets"

CONTINUOUS_BATCH_SIZE = 4096
DISCRETE_BATCH_SIZE = 256
FORWARD_BIAS_BONUS = 0.002

POLICY_CHECKPOINT = "checkpoint"
POLICY_RANDOM = "random"
POLICY_HEURISTIC = "heuristic"
POLICY_KINDS = (POLICY_CHECKPOINT, POLICY_RANDOM, POLICY_HEURISTIC)

ENCODER_NATURE_CNN = "nature_cnn"
ACTIVATIONS = ("swish", "tanh")


def _positive(kind=float):
    return vol.All(vol.Coerce(kind), vol.Range(min=0, min_included=False))


def _non_negative(kind=float):
    return vol.All(vol.Coerce(kind), vol.Range(min=0))


def _at_least_one():
    return vol.All(vol.Coerce(int), vol.Range(min=1))


def _fraction():
    return vol.All(vol.Coerce(float), vol.Range(min=0, max=1))


CONTROLLER_SCHEMA = vol.Schema(
    {
        vol.Optional("moving_turn_speed", default=45.0): _non_negative(),
        vol.Optional("stationary_turn_speed", default=30.0): _non_negative(),
        vol.Optional("jump_power", default=5.0): _non_negative(),
        vol.Optional("forward_velocity_max", default=9.0): _non_negative(),
        vol.Optional("backward_velocity_max", default=2.0): _non_negative(),
        vol.Optional("gravity_multiplier", default=1.0): _non_negative(),
        vol.Optional("anim_speed_multiplier", default=1.0): _non_negative(),
        vol.Optional("j0", default=0.5): vol.All(
            vol.Coerce(float), vol.Range(min=-1, max=1)
        ),
        vol.Optional("c0", default=0.5): vol.All(
            vol.Coerce(float), vol.Range(min=-1, max=1)
        ),
        vol.Optional("velocity_time_constant", default=0.25): _non_negative(),
        vol.Optional("walk_speed", default=3.0): _non_negative(),
        vol.Optional("trot_speed", default=6.0): _non_negative(),
        vol.Optional("forward_action_bias", default=0.0): vol.Coerce(float),
    }
)

SIM_SCHEMA = vol.Schema(
    {
        vol.Optional("arena_half_extent", default=DEFAULT_ARENA_HALF_EXTENT): _positive(),
        vol.Optional("border_width", default=DEFAULT_BORDER_WIDTH): _positive(),
        vol.Optional("physics_dt", default=DEFAULT_PHYSICS_DT): _positive(),
        vol.Optional("decision_interval", default=DEFAULT_DECISION_INTERVAL): (
            _at_least_one()
        ),
        vol.Optional("max_episode_steps", default=DEFAULT_MAX_EPISODE_STEPS): (
            _at_least_one()
        ),
        vol.Optional("task", default=TASK_COLLECT): vol.In(TASKS),
        vol.Optional("n_collectibles", default=1): _at_least_one(),
        vol.Optional("collectible_kind", default=KIND_CUBE): vol.In(COLLECTIBLE_KINDS),
        vol.Optional("obs_kind", default=OBS_VECTOR): vol.In(OBS_KINDS),
        vol.Optional("action_kind", default=ACTION_CONTINUOUS): vol.In(ACTION_KINDS),
        vol.Optional("reward_kind", default=REWARD_PER_ACTION): vol.In(REWARD_KINDS),
        vol.Optional("forward_bias", default=False): bool,
        vol.Optional("forward_only", default=False): bool,
        vol.Optional("respawn_on_collect", default=False): bool,
        vol.Optional("active_branches", default=list(ACTION_BRANCHES)): vol.All(
            [vol.In(ACTION_BRANCHES)], vol.Length(min=1)
        ),
        vol.Optional("seed", default=DEFAULT_SEED): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional("controller", default={}): CONTROLLER_SCHEMA,
    }
)

REWARD_SCHEMA = vol.Schema(
    {
        vol.Optional("kind", default=None): vol.Any(None, vol.In(REWARD_KINDS)),
        vol.Optional("per_action_scale", default=0.01): vol.Coerce(float),
        vol.Optional("goal_reward", default=1.0): _positive(),
        vol.Optional("out_of_bounds_reward", default=-1.0): vol.All(
            vol.Coerce(float), vol.Range(max=0, max_included=False)
        ),
        vol.Optional("time_penalty", default=-0.0005): vol.All(
            vol.Coerce(float), vol.Range(max=0)
        ),
        vol.Optional("forward_bias_bonus", default=None): vol.Any(None, _non_negative()),
        vol.Optional("curiosity_enabled", default=False): bool,
        vol.Optional("curiosity_strength", default=0.1): _non_negative(),
        vol.Optional("curiosity_gamma", default=0.99): _fraction(),
        vol.Optional("curiosity_encoding_size", default=64): _at_least_one(),
        vol.Optional("curiosity_learning_rate", default=3e-4): _positive(),
        vol.Optional("curiosity_forward_weight", default=0.2): _fraction(),
    }
)

PPO_SCHEMA = vol.Schema(
    {
        vol.Optional("batch_size", default=None): vol.Any(None, _at_least_one()),
        vol.Optional("buffer_size", default=40960): _at_least_one(),
        vol.Optional("learning_rate", default=3e-4): _positive(),
        vol.Optional("max_steps", default=20_000_000): _at_least_one(),
        vol.Optional("num_epochs", default=5): _at_least_one(),
        vol.Optional("time_horizon", default=1000): _at_least_one(),
        vol.Optional("gamma", default=0.995): _fraction(),
        vol.Optional("gae_lambda", default=0.95): _fraction(),
        vol.Optional("clip_epsilon", default=0.2): _positive(),
        vol.Optional("entropy_beta", default=5e-3): _non_negative(),
        vol.Optional("value_coeff", default=0.5): _non_negative(),
        vol.Optional("grad_clip_norm", default=0.5): _positive(),
        vol.Optional("adam_epsilon", default=1e-5): _positive(),
        vol.Optional("n_parallel_envs", default=DEFAULT_PARALLEL_ENVS): _at_least_one(),
        vol.Optional("checkpoint_interval", default=10): _at_least_one(),
        vol.Optional("normalize_advantages", default=True): bool,
        vol.Optional("allow_batch_mismatch", default=False): bool,
    }
)

NETWORK_SCHEMA = vol.Schema(
    {
        vol.Optional("hidden_units", default=512): _at_least_one(),
        vol.Optional("num_layers", default=2): _at_least_one(),
        vol.Optional("activation", default="swish"): vol.In(ACTIVATIONS),
        vol.Optional("encoder", default=None): vol.Any(None, "none", ENCODER_NATURE_CNN),
    }
)

EVAL_SCHEMA = vol.Schema(
    {
        vol.Optional("n_collectibles", default=None): vol.Any(None, _at_least_one()),
        vol.Optional("arena_half_extent", default=None): vol.Any(None, _positive()),
        vol.Optional("max_episodes", default=200): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional("max_steps", default=1_000_000): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional("policy", default=POLICY_CHECKPOINT): vol.In(POLICY_KINDS),
        vol.Optional("checkpoint", default=None): vol.Any(None, str),
        vol.Optional("record_traces", default=True): bool,
    }
)

RUN_SCHEMA = vol.Schema(
    {
        vol.Optional("sim", default={}): SIM_SCHEMA,
        vol.Optional("reward", default={}): REWARD_SCHEMA,
        vol.Optional("ppo", default={}): PPO_SCHEMA,
        vol.Optional("network", default={}): NETWORK_SCHEMA,
        vol.Optional("eval", default={}): EVAL_SCHEMA,
    }
)


def _validate(schema: vol.Schema, data: Any, where: str) -> Dict[str, Any]:
    try:
        return schema(copy.deepcopy(data))
    except vol.Invalid as exc:
        raise ConfigError(f"invalid {where} configuration: {exc}") from exc


@dataclass(frozen=True)
class ControllerParams:
    """Character controller properties (turn speeds in deg/s, speeds in m/s)."""

    moving_turn_speed: float = 45.0
    stationary_turn_speed: float = 30.0
    jump_power: float = 5.0
    forward_velocity_max: float = 9.0
    backward_velocity_max: float = 2.0
    gravity_multiplier: float = 1.0
    anim_speed_multiplier: float = 1.0
    j0: float = 0.5
    c0: float = 0.5
    velocity_time_constant: float = 0.25
    walk_speed: float = 3.0
    trot_speed: float = 6.0
    forward_action_bias: float = 0.0

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "ControllerParams":
        """Validate and build."""
        return cls(**_validate(CONTROLLER_SCHEMA, data or {}, "controller"))


@dataclass(frozen=True)
class SimConfig:
    """Simulator configuration."""

    arena_half_extent: float = DEFAULT_ARENA_HALF_EXTENT
    border_width: float = DEFAULT_BORDER_WIDTH
    physics_dt: float = DEFAULT_PHYSICS_DT
    decision_interval: int = DEFAULT_DECISION_INTERVAL
    max_episode_steps: int = DEFAULT_MAX_EPISODE_STEPS
    task: str = TASK_COLLECT
    n_collectibles: int = 1
    collectible_kind: str = KIND_CUBE
    obs_kind: str = OBS_VECTOR
    action_kind: str = ACTION_CONTINUOUS
    reward_kind: str = REWARD_PER_ACTION
    forward_bias: bool = False
    forward_only: bool = False
    respawn_on_collect: bool = False
    active_branches: Tuple[str, ...] = ACTION_BRANCHES
    seed: int = DEFAULT_SEED
    controller: ControllerParams = field(default_factory=ControllerParams)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "SimConfig":
        """Validate and build; unknown keys are rejected."""
        return cls._from_validated(_validate(SIM_SCHEMA, data or {}, "sim"))

    @classmethod
    def _from_validated(cls, values: Dict[str, Any]) -> "SimConfig":
        values = dict(values)
        values["controller"] = ControllerParams(**values["controller"])
        values["active_branches"] = tuple(values["active_branches"])
        return cls(**values)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        """Parse a JSON document."""
        return cls.from_dict(_parse_json(text, "sim"))

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON compatible dict."""
        data = asdict(self)
        data["active_branches"] = list(self.active_branches)
        return data

    def to_json(self) -> str:
        """Serialize to JSON."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **changes) -> "SimConfig":
        """Return a copy with some fields changed."""
        return replace(self, **changes)


@dataclass(frozen=True)
class RewardConfig:
    """Reward signal configuration."""

    kind: str = REWARD_PER_ACTION
    per_action_scale: float = 0.01
    goal_reward: float = 1.0
    out_of_bounds_reward: float = -1.0
    time_penalty: float = -0.0005
    forward_bias_bonus: float = 0.0
    curiosity_enabled: bool = False
    curiosity_strength: float = 0.1
    curiosity_gamma: float = 0.99
    curiosity_encoding_size: int = 64
    curiosity_learning_rate: float = 3e-4
    curiosity_forward_weight: float = 0.2

    @classmethod
    def from_dict(
        cls, data: Optional[Dict[str, Any]] = None, sim: Optional[SimConfig] = None
    ) -> "RewardConfig":
        """Validate and build; kind and forward bias default from the sim section."""
        values = _validate(REWARD_SCHEMA, data or {}, "reward")
        return cls._from_validated(values, sim or SimConfig())

    @classmethod
    def _from_validated(cls, values: Dict[str, Any], sim: SimConfig) -> "RewardConfig":
        values = dict(values)
        if values["kind"] is None:
            values["kind"] = sim.reward_kind
        if values["forward_bias_bonus"] is None:
            values["forward_bias_bonus"] = FORWARD_BIAS_BONUS if sim.forward_bias else 0.0
        return cls(**values)


@dataclass(frozen=True)
class PpoConfig:
    """PPO hyper parameters."""

    batch_size: int = CONTINUOUS_BATCH_SIZE
    buffer_size: int = 40960
    learning_rate: float = 3e-4
    max_steps: int = 20_000_000
    num_epochs: int = 5
    time_horizon: int = 1000
    gamma: float = 0.995
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    entropy_beta: float = 5e-3
    value_coeff: float = 0.5
    grad_clip_norm: float = 0.5
    adam_epsilon: float = 1e-5
    n_parallel_envs: int = DEFAULT_PARALLEL_ENVS
    checkpoint_interval: int = 10
    normalize_advantages: bool = True
    allow_batch_mismatch: bool = False

    def __post_init__(self):
        """Check cross-field invariants."""
        if self.buffer_size % self.batch_size:
            raise ConfigError(
                f"buffer_size {self.buffer_size} is not a multiple of "
                f"batch_size {self.batch_size}"
            )
        if self.time_horizon > self.buffer_size:
            raise ConfigError(
                f"time_horizon {self.time_horizon} exceeds buffer_size {self.buffer_size}"
            )
        if self.buffer_size % self.n_parallel_envs:
            raise ConfigError(
                f"buffer_size {self.buffer_size} is not divisible by "
                f"n_parallel_envs {self.n_parallel_envs}"
            )

    @classmethod
    def from_dict(
        cls, data: Optional[Dict[str, Any]] = None, action_kind: str = ACTION_CONTINUOUS
    ) -> "PpoConfig":
        """Validate and build; batch size defaults by action kind."""
        values = _validate(PPO_SCHEMA, data or {}, "ppo")
        return cls._from_validated(values, action_kind)

    @classmethod
    def _from_validated(cls, values: Dict[str, Any], action_kind: str) -> "PpoConfig":
        values = dict(values)
        if values["batch_size"] is None:
            values["batch_size"] = (
                DISCRETE_BATCH_SIZE
                if action_kind == ACTION_DISCRETE
                else CONTINUOUS_BATCH_SIZE
            )
        elif (
            action_kind == ACTION_CONTINUOUS
            and values["batch_size"] == DISCRETE_BATCH_SIZE
            and not values["allow_batch_mismatch"]
        ):
            raise ConfigError(
                "continuous actions with the discrete batch size "
                f"{DISCRETE_BATCH_SIZE}; set ppo.allow_batch_mismatch to override"
            )
        return cls(**values)

    def learning_rate_at(self, step: int) -> float:
        """Linearly decayed learning rate, zero at max_steps."""
        return self.learning_rate * max(0.0, 1.0 - step / self.max_steps)


@dataclass(frozen=True)
class NetworkConfig:
    """Network knobs shared by every architecture."""

    hidden_units: int = 512
    num_layers: int = 2
    activation: str = "swish"
    encoder: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "NetworkConfig":
        """Validate and build."""
        return cls(**_validate(NETWORK_SCHEMA, data or {}, "network"))

    def encoder_for(self, obs_kind: str) -> str:
        """Return the encoder to use for an observation kind."""
        if self.encoder is not None:
            return self.encoder
        return ENCODER_NATURE_CNN if obs_kind == OBS_VISUAL else "none"


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol configuration."""

    n_collectibles: Optional[int] = None
    arena_half_extent: Optional[float] = None
    max_episodes: int = 200
    max_steps: int = 1_000_000
    policy: str = POLICY_CHECKPOINT
    checkpoint: Optional[str] = None
    record_traces: bool = True

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "EvalConfig":
        """Validate and build."""
        return cls(**_validate(EVAL_SCHEMA, data or {}, "eval"))

    def scene(self, sim: SimConfig) -> SimConfig:
        """Return the test scene: overrides applied and respawn on."""
        return sim.replace(
            n_collectibles=self.n_collectibles or sim.n_collectibles,
            arena_half_extent=self.arena_half_extent or sim.arena_half_extent,
            respawn_on_collect=True,
        )


@dataclass(frozen=True)
class RunConfig:
    """All sections of one run."""

    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """Validate every section and build."""
        values = _validate(RUN_SCHEMA, data or {}, "run")
        sim = SimConfig._from_validated(values["sim"])
        return cls(
            sim=sim,
            reward=RewardConfig._from_validated(values["reward"], sim),
            ppo=PpoConfig._from_validated(values["ppo"], sim.action_kind),
            network=NetworkConfig(**values["network"]),
            eval=EvalConfig(**values["eval"]),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Return the fully resolved configuration."""
        return {
            "sim": self.sim.to_dict(),
            "reward": asdict(self.reward),
            "ppo": asdict(self.ppo),
            "network": asdict(self.network),
            "eval": asdict(self.eval),
        }

    def write(self, path: Union[str, Path]):
        """Write the resolved configuration as JSON."""
        write_json(path, self.to_dict())


def _parse_json(text: str, where: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: not valid JSON: {exc}") from exc


def read_json(path: Union[str, Path]) -> Any:
    """Read a JSON file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return _parse_json(text, str(path))


def write_json(path: Union[str, Path], data: Any):
    """Write a JSON file."""
    try:
        Path(path).write_text(
            json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def preset_names() -> Sequence[str]:
    """Return the shipped preset names."""
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def resolve_config_path(name: Union[str, Path]) -> Path:
    """Return a config path; bare preset names resolve to the shipped presets."""
    path = Path(name)
    if path.exists():
        return path
    preset = PRESET_DIR / f"{path.stem}.json"
    if path.parent == Path(".") and preset.exists():
        return preset
    raise IoError(f"config file {name} not found")


def parse_override(item: str) -> Tuple[Tuple[str, ...], Any]:
    """Parse 'a.b.c=value'; the value is JSON when it parses, else a string."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return tuple(part for part in key.strip().split(".")), value


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Return a copy of data with dotted overrides applied."""
    result = copy.deepcopy(data)
    for item in overrides:
        path, value = parse_override(item)
        node = result
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {item!r}: {part} is not a section")
            node = child
        node[path[-1]] = value
        _LOGGER.debug("Override %s = %r", ".".join(path), value)
    return result


def load_run_config(
    config: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> RunConfig:
    """Load a run config: file < dotted overrides < explicit flags."""
    data: Dict[str, Any] = {}
    if config is not None:
        data = read_json(resolve_config_path(config))
        if not isinstance(data, dict):
            raise ConfigError(f"{config}: top level must be an object")
    data = apply_overrides(data, overrides)
    if seed is not None:
        data.setdefault("sim", {})["seed"] = seed
    return RunConfig.from_dict(data)
