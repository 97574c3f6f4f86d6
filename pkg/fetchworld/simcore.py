"""Vector math and random streams shared by the simulator."""
import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from .const import NORMALIZE_TOLERANCE
from .exceptions import DegenerateVector, InvalidRange

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Vec3:
    """Three component vector in meters (or unitless for directions)."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def dot(self, other: "Vec3") -> float:
        """Return the dot product."""
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        """Return the euclidean length."""
        return math.sqrt(self.dot(self))

    def horizontal_distance(self, other: "Vec3") -> float:
        """Return the distance in the ground (x, z) plane."""
        return math.hypot(self.x - other.x, self.z - other.z)

    def is_finite(self) -> bool:
        """Return true if no component is NaN or infinite."""
        return all(math.isfinite(c) for c in (self.x, self.y, self.z))

    def as_tuple(self) -> Tuple[float, float, float]:
        """Return (x, y, z)."""
        return (self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        """Return a float64 array."""
        return np.array((self.x, self.y, self.z), dtype=np.float64)

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> "Vec3":
        """Build from any three numbers."""
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


def normalize(v: Vec3) -> Vec3:
    """Return the unit vector parallel to v."""
    length = v.norm()
    if not length > NORMALIZE_TOLERANCE:
        raise DegenerateVector(f"cannot normalize vector of length {length:g}")
    return Vec3(v.x / length, v.y / length, v.z / length)


def instance_seed(seed: int, instance_id: Union[int, str]) -> int:
    """Return the sub-seed of one instance: seed XOR blake2b(instance id)."""
    digest = hashlib.blake2b(str(instance_id).encode("utf-8"), digest_size=8).digest()
    return (int(seed) & _MASK64) ^ int.from_bytes(digest, "little")


class Rng:
    """Counter-based random stream (Philox) with documented sub-seeding."""

    def __init__(self, seed: int):
        """Init stream from a 64-bit seed."""
        self.seed = int(seed) & _MASK64
        self._generator = np.random.Generator(np.random.Philox(key=self.seed))

    def spawn(self, instance_id: Union[int, str]) -> "Rng":
        """Return an independent stream for one instance."""
        return Rng(instance_seed(self.seed, instance_id))

    @property
    def generator(self) -> np.random.Generator:
        """Underlying numpy generator."""
        return self._generator

    def random(self, size: Optional[Union[int, Tuple[int, ...]]] = None):
        """Draw from [0, 1)."""
        return self._generator.random(size)

    def uniform(self, lo: float, hi: float) -> float:
        """Draw one value from [lo, hi)."""
        return rng_uniform(self, lo, hi)

    def normal(self, size: Optional[Union[int, Tuple[int, ...]]] = None):
        """Draw standard normal values."""
        return self._generator.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        """Draw integers from [low, high)."""
        return self._generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        """Return a random permutation of range(n)."""
        return self._generator.permutation(n)

    def torch_seed(self) -> int:
        """Draw a seed suitable for torch.manual_seed."""
        return int(self._generator.integers(0, 2**63 - 1))


def rng_uniform(rng: Rng, lo: float, hi: float) -> float:
    """Draw one value from [lo, hi); lo == hi returns lo."""
    if lo > hi:
        raise InvalidRange(f"lower bound {lo} is above upper bound {hi}")
    if lo == hi:
        return float(lo)
    value = lo + (hi - lo) * float(rng.generator.random())
    if value >= hi:
        value = float(np.nextafter(hi, lo))
    return value
