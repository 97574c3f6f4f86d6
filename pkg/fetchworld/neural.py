"""Policy and value networks, action sampling, gradients and checkpoint files."""
import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.distributions import Categorical, Normal

from .config import ENCODER_NATURE_CNN, NetworkConfig, RewardConfig, SimConfig
from .const import (
    ACTION_CONTINUOUS,
    ACTION_KINDS,
    BRANCH_SIZES,
    CHECKPOINT_VERSION,
    CONTINUOUS_ACTION_SIZE,
    IMAGE_CHANNELS,
    IMAGE_SIZE,
    OBS_KINDS,
    OBS_VISUAL,
    POSITION_INPUT_SCALE,
    VECTOR_OBS_SIZE,
)
from .exceptions import (
    ConfigError,
    CorruptCheckpoint,
    IoError,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .simcore import Rng

_LOGGER = logging.getLogger(__name__)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
NATURE_CNN_FLAT = 7 * 7 * 64
P_LOCAL = slice(17, 20)

HIDDEN_GAIN = math.sqrt(2.0)
POLICY_GAIN = 0.01
VALUE_GAIN = 1.0


@dataclass(frozen=True)
class Architecture:
    """Descriptor that fully determines the parameter layout."""

    obs_kind: str
    action_kind: str
    hidden_units: int = 512
    num_layers: int = 2
    encoder: str = "none"
    activation: str = "swish"
    value_heads: int = 1

    def __post_init__(self):
        """Check the descriptor is consistent."""
        if self.obs_kind not in OBS_KINDS or self.action_kind not in ACTION_KINDS:
            raise ConfigError(f"unknown architecture kinds {self.obs_kind}/{self.action_kind}")
        if self.obs_kind == OBS_VISUAL and self.encoder != ENCODER_NATURE_CNN:
            raise ConfigError("visual observations need the nature_cnn encoder")
        if self.obs_kind != OBS_VISUAL and self.encoder != "none":
            raise ConfigError(f"vector observations take no {self.encoder} encoder")
        if self.value_heads not in (1, 2):
            raise ConfigError(f"value_heads must be 1 or 2, got {self.value_heads}")

    @classmethod
    def from_configs(
        cls, sim: SimConfig, network: NetworkConfig, reward: Optional[RewardConfig] = None
    ) -> "Architecture":
        """Derive the descriptor of a run."""
        return cls(
            obs_kind=sim.obs_kind,
            action_kind=sim.action_kind,
            hidden_units=network.hidden_units,
            num_layers=network.num_layers,
            encoder=network.encoder_for(sim.obs_kind),
            activation=network.activation,
            value_heads=2 if reward is not None and reward.curiosity_enabled else 1,
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Architecture":
        """Build from a checkpoint header."""
        try:
            return cls(**data)
        except (TypeError, ConfigError) as exc:
            raise CorruptCheckpoint(f"bad architecture descriptor: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON compatible dict."""
        return asdict(self)

    @property
    def observation_shape(self) -> Tuple[int, ...]:
        """Shape of one observation."""
        if self.obs_kind == OBS_VISUAL:
            return (IMAGE_SIZE, IMAGE_SIZE, IMAGE_CHANNELS)
        return (VECTOR_OBS_SIZE,)

    @property
    def action_size(self) -> int:
        """Number of raw action components."""
        if self.action_kind == ACTION_CONTINUOUS:
            return CONTINUOUS_ACTION_SIZE
        return len(BRANCH_SIZES)


def _activation(name: str) -> nn.Module:
    return nn.Tanh() if name == "tanh" else nn.SiLU()


def _init_layer(layer: nn.Module, gain: float):
    nn.init.orthogonal_(layer.weight, gain=gain)
    nn.init.zeros_(layer.bias)


@dataclass
class PolicyOutput:
    """Action distribution parameters and value estimates of a batch."""

    action_kind: str
    value: torch.Tensor
    mean: Optional[torch.Tensor] = None
    log_std: Optional[torch.Tensor] = None
    logits: List[torch.Tensor] = field(default_factory=list)
    curiosity_value: Optional[torch.Tensor] = None

    @property
    def continuous(self) -> bool:
        """True for the Gaussian head."""
        return self.action_kind == ACTION_CONTINUOUS

    def branch_probabilities(self) -> List[torch.Tensor]:
        """Softmax of each discrete branch."""
        return [torch.softmax(lg, dim=-1) for lg in self.logits]

    def log_prob(self, actions: torch.Tensor) -> torch.Tensor:
        """Joint log probability of a batch of actions."""
        if self.continuous:
            return Normal(self.mean, self.log_std.exp()).log_prob(actions).sum(dim=-1)
        actions = actions.long()
        return torch.stack(
            [Categorical(logits=lg).log_prob(actions[:, i]) for i, lg in enumerate(self.logits)]
        ).sum(dim=0)

    def entropy(self) -> torch.Tensor:
        """Joint entropy per sample."""
        if self.continuous:
            return Normal(self.mean, self.log_std.exp()).entropy().sum(dim=-1)
        return torch.stack([Categorical(logits=lg).entropy() for lg in self.logits]).sum(dim=0)

    def mode(self) -> torch.Tensor:
        """Greedy actions: the mean, or the argmax of every branch."""
        if self.continuous:
            return self.mean
        return torch.stack([lg.argmax(dim=-1) for lg in self.logits], dim=1)


class PolicyNetwork(nn.Module):
    """Shared trunk with a policy head and one or two value heads."""

    def __init__(self, architecture: Architecture, seed: int = 0):
        """Init layers deterministically from seed."""
        super().__init__()
        self.architecture = arch = architecture
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            layers: List[nn.Module] = []
            if arch.encoder == ENCODER_NATURE_CNN:
                for conv in (
                    nn.Conv2d(IMAGE_CHANNELS, 32, 8, stride=4),
                    nn.Conv2d(32, 64, 4, stride=2),
                    nn.Conv2d(64, 64, 3, stride=1),
                ):
                    _init_layer(conv, HIDDEN_GAIN)
                    layers += [conv, _activation(arch.activation)]
                dense = nn.Linear(NATURE_CNN_FLAT, arch.hidden_units)
                _init_layer(dense, HIDDEN_GAIN)
                layers += [nn.Flatten(), dense, _activation(arch.activation)]
                width = arch.hidden_units
            else:
                width = VECTOR_OBS_SIZE
            self.encoder = nn.Sequential(*layers)

            trunk: List[nn.Module] = []
            for _ in range(arch.num_layers):
                dense = nn.Linear(width, arch.hidden_units)
                _init_layer(dense, HIDDEN_GAIN)
                trunk += [dense, _activation(arch.activation)]
                width = arch.hidden_units
            self.trunk = nn.Sequential(*trunk)

            if arch.action_kind == ACTION_CONTINUOUS:
                self.policy_head = nn.Linear(width, CONTINUOUS_ACTION_SIZE)
                self.log_std = nn.Parameter(torch.zeros(CONTINUOUS_ACTION_SIZE))
            else:
                self.policy_head = nn.Linear(width, sum(BRANCH_SIZES))
            _init_layer(self.policy_head, POLICY_GAIN)
            self.value_head = nn.Linear(width, arch.value_heads)
            _init_layer(self.value_head, VALUE_GAIN)

        scale = torch.ones(VECTOR_OBS_SIZE)
        scale[P_LOCAL] = POSITION_INPUT_SCALE
        self.register_buffer("input_scale", scale, persistent=False)

    def forward(self, obs) -> PolicyOutput:  # pylint: disable=arguments-differ
        """Evaluate a batch of observations."""
        dtype = self.value_head.weight.dtype
        x = torch.as_tensor(obs, dtype=dtype)
        expected = self.architecture.observation_shape
        if tuple(x.shape[1:]) != expected:
            raise ShapeMismatch(
                f"{self.architecture.obs_kind} policy expects observations of shape "
                f"{expected}, got {tuple(x.shape[1:])}"
            )
        if self.architecture.obs_kind == OBS_VISUAL:
            x = self.encoder(x.permute(0, 3, 1, 2))
        else:
            x = x * self.input_scale.to(dtype)
        hidden = self.trunk(x)
        values = self.value_head(hidden)
        head = self.policy_head(hidden)
        output = PolicyOutput(
            action_kind=self.architecture.action_kind,
            value=values[:, 0],
            curiosity_value=values[:, 1] if values.shape[1] > 1 else None,
        )
        if self.architecture.action_kind == ACTION_CONTINUOUS:
            output.mean = head
            output.log_std = self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).expand_as(head)
        else:
            output.logits = list(torch.split(head, BRANCH_SIZES, dim=1))
        return output


def sample_action(output: PolicyOutput, rng: Rng) -> Tuple[np.ndarray, np.ndarray]:
    """Draw one action per batch row; returns (actions, log_probs) in float64."""
    if output.continuous:
        mean = output.mean.detach().double().numpy()
        log_std = output.log_std.detach().double().numpy()
        std = np.exp(log_std)
        actions = mean + std * rng.normal(mean.shape)
        log_prob = (
            -0.5 * ((actions - mean) / std) ** 2 - log_std - 0.5 * math.log(2.0 * math.pi)
        ).sum(axis=1)
        return actions, log_prob
    columns = []
    log_prob = 0.0
    for logits in output.logits:
        probs = torch.softmax(logits.detach().double(), dim=-1).numpy()
        draws = rng.random(probs.shape[0])
        index = (np.cumsum(probs, axis=1) <= draws[:, None]).sum(axis=1)
        index = np.minimum(index, probs.shape[1] - 1)
        columns.append(index)
        log_prob = log_prob + np.log(probs[np.arange(len(index)), index])
    return np.stack(columns, axis=1).astype(np.int64), np.asarray(log_prob, dtype=np.float64)


def greedy_action(output: PolicyOutput) -> np.ndarray:
    """Mode of the action distribution as numpy."""
    actions = output.mode().detach()
    if output.continuous:
        return actions.double().numpy()
    return actions.long().numpy()


def gradient(
    module: nn.Module,
    loss_fn: Callable[[nn.Module, Any], torch.Tensor],
    batch: Any = None,
) -> Dict[str, torch.Tensor]:
    """Reverse mode gradient of loss_fn(module, batch) for every named parameter."""
    names, params = zip(*module.named_parameters())
    loss = loss_fn(module, batch)
    loss = torch.as_tensor(loss)
    if not torch.isfinite(loss).all():
        raise NonFiniteLoss(f"loss is {loss.item()}")
    if not loss.requires_grad:
        return OrderedDict((name, torch.zeros_like(p)) for name, p in zip(names, params))
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return OrderedDict(
        (name, torch.zeros_like(p) if g is None else g.detach().clone())
        for name, p, g in zip(names, params, grads)
    )


def gradient_check(
    module: nn.Module,
    loss_fn: Callable[[nn.Module, Any], torch.Tensor],
    batch: Any = None,
    step: float = 1e-3,
    samples_per_tensor: Optional[int] = None,
    rng: Optional[Rng] = None,
) -> float:
    """Max relative error of gradient() against central finite differences."""
    grads = gradient(module, loss_fn, batch)
    rng = rng or Rng(0)
    worst = 0.0
    with torch.no_grad():
        for name, param in module.named_parameters():
            flat = param.view(-1)
            count = flat.numel()
            if samples_per_tensor is None or samples_per_tensor >= count:
                indices = np.arange(count)
            else:
                indices = rng.permutation(count)[:samples_per_tensor]
            analytic = grads[name].reshape(-1)
            for i in indices:
                saved = flat[i].item()
                flat[i] = saved + step
                upper = loss_fn(module, batch).item()
                flat[i] = saved - step
                lower = loss_fn(module, batch).item()
                flat[i] = saved
                numeric = (upper - lower) / (2.0 * step)
                exact = analytic[i].item()
                error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1.0)
                worst = max(worst, error)
    return worst


@dataclass
class PolicyParams:
    """Ordered named float32 tensors plus their architecture descriptor."""

    architecture: Architecture
    tensors: "OrderedDict[str, np.ndarray]"
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_module(cls, net: PolicyNetwork, **metadata) -> "PolicyParams":
        """Snapshot the parameters of a network."""
        tensors = OrderedDict(
            (name, p.detach().cpu().float().numpy().copy()) for name, p in net.named_parameters()
        )
        return cls(net.architecture, tensors, dict(metadata))

    def to_module(self) -> PolicyNetwork:
        """Build a network carrying these parameters."""
        net = PolicyNetwork(self.architecture)
        state = OrderedDict((name, torch.from_numpy(t.copy())) for name, t in self.tensors.items())
        try:
            net.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise CorruptCheckpoint(f"tensors do not fit the architecture: {exc}") from exc
        return net

    def parameter_count(self) -> int:
        """Total number of scalars."""
        return int(sum(t.size for t in self.tensors.values()))

    def is_finite(self) -> bool:
        """True when no value is NaN or infinite."""
        return all(np.isfinite(t).all() for t in self.tensors.values())


def expected_parameter_count(architecture: Architecture) -> int:
    """Parameter count implied by an architecture descriptor."""
    return sum(p.numel() for p in PolicyNetwork(architecture).parameters())


def save_checkpoint(params: PolicyParams, path: Union[str, Path]):
    """Write a JSON header line followed by the little-endian float32 payload."""
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in params.tensors.items():
        data = np.ascontiguousarray(tensor, dtype="<f4")
        manifest.append(
            {"name": name, "shape": list(data.shape), "offset": offset, "count": int(data.size)}
        )
        chunks.append(data.tobytes())
        offset += int(data.size)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": params.architecture.to_dict(),
        "tensors": manifest,
        "payload_bytes": offset * 4,
        "metadata": params.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + b"".join(chunks)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc.strerror or exc}") from exc
    _LOGGER.debug("Wrote checkpoint %s (%s values)", path, offset)


def _read_header(path: Union[str, Path]) -> Tuple[Dict[str, Any], bytes]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    head, sep, payload = blob.partition(b"\n")
    if not sep:
        raise CorruptCheckpoint(f"{path}: missing header line")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header") from exc
    if not isinstance(header, dict):
        raise CorruptCheckpoint(f"{path}: header is not an object")
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: format {version!r}, expected {CHECKPOINT_VERSION!r}")
    return header, payload


def inspect_checkpoint(path: Union[str, Path]) -> Dict[str, Any]:
    """Return the header of a checkpoint without decoding tensors."""
    return _read_header(path)[0]


def load_checkpoint(path: Union[str, Path]) -> PolicyParams:
    """Read a checkpoint written by save_checkpoint."""
    header, payload = _read_header(path)
    try:
        manifest = header["tensors"]
        architecture = Architecture.from_dict(header["architecture"])
        total = sum(int(entry["count"]) for entry in manifest)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: bad manifest") from exc
    if len(payload) != total * 4 or header.get("payload_bytes") != len(payload):
        raise CorruptCheckpoint(
            f"{path}: payload holds {len(payload)} bytes, manifest needs {total * 4}"
        )
    if total != expected_parameter_count(architecture):
        raise CorruptCheckpoint(f"{path}: {total} values do not match the architecture")
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in manifest:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(entry["count"])
        if int(np.prod(shape)) != count:
            raise CorruptCheckpoint(f"{path}: tensor {entry['name']} shape/count disagree")
        data = np.frombuffer(payload, dtype="<f4", count=count, offset=int(entry["offset"]) * 4)
        tensors[entry["name"]] = data.astype(np.float32).reshape(shape)
    return PolicyParams(architecture, tensors, dict(header.get("metadata", {})))
