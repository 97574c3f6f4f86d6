"""Observation encoders: the 20 float vector and the rendered 84x84 RGB image."""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .config import SimConfig
from .const import (
    COIN_DIAMETER,
    COIN_THICKNESS,
    CUBE_EDGE,
    IMAGE_CHANNELS,
    IMAGE_SIZE,
    KIND_COIN,
    RENDER_SIZE,
    VECTOR_OBS_SIZE,
)
from .controller import forward_vector
from .exceptions import DegenerateVector, IoError
from .simcore import Vec3, normalize
from .world import WorldState, border_distance

_LOGGER = logging.getLogger(__name__)

Triple = Tuple[float, float, float]

GROUND_COLOR = (0.5, 0.5, 0.5)
BORDER_COLOR = (1.0, 1.0, 1.0)
CUBE_COLOR = (1.0, 0.0, 0.0)
COIN_COLOR = (1.0, 1.0, 0.0)
AGENT_COLOR = (0.55, 0.35, 0.15)
SKY_COLOR = (0.53, 0.81, 0.92)

AGENT_BODY = (0.5, 0.6, 1.0)  # width, height, length
BORDER_LIFT = 0.01
COIN_SEGMENTS = 24


@dataclass(frozen=True)
class ObservationVec:
    """Vector observation; to_array() yields the 20 floats in fixed order."""

    d_target: Triple
    d_border: Tuple[float, float]
    v_linear: Triple
    v_angular: Triple
    d_forward: Triple
    d_up: Triple
    p_local: Triple

    def to_array(self) -> np.ndarray:
        """Return the 20 components as float64."""
        values = np.array(
            self.d_target
            + self.d_border
            + self.v_linear
            + self.v_angular
            + self.d_forward
            + self.d_up
            + self.p_local,
            dtype=np.float64,
        )
        assert values.shape == (VECTOR_OBS_SIZE,)
        return values

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ObservationVec":
        """Split a 20 float vector into named parts."""
        v = [float(x) for x in values]
        if len(v) != VECTOR_OBS_SIZE:
            raise ValueError(f"expected {VECTOR_OBS_SIZE} values, got {len(v)}")
        return cls(
            d_target=(v[0], v[1], v[2]),
            d_border=(v[3], v[4]),
            v_linear=(v[5], v[6], v[7]),
            v_angular=(v[8], v[9], v[10]),
            d_forward=(v[11], v[12], v[13]),
            d_up=(v[14], v[15], v[16]),
            p_local=(v[17], v[18], v[19]),
        )


def observe_vector(state: WorldState, target: Vec3, cfg: SimConfig) -> ObservationVec:
    """Encode the agent and its target as 20 floats."""
    d_forward = forward_vector(state.agent_yaw)
    try:
        d_target = normalize(target - state.agent_pos)
    except DegenerateVector:
        _LOGGER.debug("Agent sits on its target, using forward direction")
        d_target = d_forward
    return ObservationVec(
        d_target=d_target.as_tuple(),
        d_border=border_distance(state.agent_pos, cfg),
        v_linear=state.agent_vel.as_tuple(),
        v_angular=(0.0, state.agent_ang_vel.y, 0.0),
        d_forward=d_forward.as_tuple(),
        d_up=(0.0, 1.0, 0.0),
        p_local=state.agent_pos.as_tuple(),
    )


@dataclass(frozen=True)
class CameraRig:
    """Third person camera following the agent."""

    offset: float = 2.0
    height: float = 1.5
    pitch_deg: float = -10.0
    fov_deg: float = 60.0
    near: float = 0.1
    far: float = 200.0

    def basis(self, yaw: float) -> np.ndarray:
        """Return rows right, up, forward of the camera frame."""
        p = math.radians(self.pitch_deg)
        forward = (math.sin(yaw) * math.cos(p), math.sin(p), math.cos(yaw) * math.cos(p))
        right = (math.cos(yaw), 0.0, -math.sin(yaw))
        up = (-math.sin(p) * math.sin(yaw), math.cos(p), -math.sin(p) * math.cos(yaw))
        return np.array((right, up, forward), dtype=np.float64)

    def position(self, agent_pos: Vec3, yaw: float) -> np.ndarray:
        """Return the camera center in world coordinates."""
        back = forward_vector(yaw) * self.offset
        return np.array(
            (agent_pos.x - back.x, agent_pos.y + self.height, agent_pos.z - back.z),
            dtype=np.float64,
        )

    def focal(self, size: int) -> float:
        """Return the focal length in pixels for a square image."""
        return (size / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass(frozen=True)
class SceneView:
    """What the camera can see: own pose and scene geometry, no task state."""

    agent_pos: Vec3
    agent_yaw: float
    objects: Tuple[Tuple[str, Vec3], ...]
    arena_half_extent: float
    border_width: float

    @classmethod
    def from_state(cls, state: WorldState, cfg: SimConfig) -> "SceneView":
        """Redact a world state down to its visible parts."""
        return cls(
            agent_pos=state.agent_pos,
            agent_yaw=state.agent_yaw,
            objects=tuple((c.kind, c.position) for c in state.collectibles if c.alive),
            arena_half_extent=cfg.arena_half_extent,
            border_width=cfg.border_width,
        )


class Projection(NamedTuple):
    """Pixel coordinates (u right, v down) and depth along the optical axis."""

    u: float
    v: float
    depth: float


BEHIND = None


def project_point(
    rig: CameraRig, world_point: Vec3, pose, size: int = IMAGE_SIZE
) -> Optional[Projection]:
    """Project a world point; BEHIND (None) when not in front of the near plane."""
    cam = rig.basis(pose.agent_yaw) @ (
        world_point.as_array() - rig.position(pose.agent_pos, pose.agent_yaw)
    )
    if cam[2] <= rig.near:
        return BEHIND
    focal = rig.focal(size)
    return Projection(
        u=size / 2.0 + focal * cam[0] / cam[2],
        v=size / 2.0 - focal * cam[1] / cam[2],
        depth=float(cam[2]),
    )


def _box(center: Triple, half: Triple, yaw: float = 0.0) -> List[np.ndarray]:
    cx, cy, cz = center
    hx, hy, hz = half
    cos_y, sin_y = math.cos(yaw), math.sin(yaw)
    corners = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                lx, ly, lz = sx * hx, sy * hy, sz * hz
                corners.append(
                    (cx + lx * cos_y + lz * sin_y, cy + ly, cz - lx * sin_y + lz * cos_y)
                )
    c = np.array(corners, dtype=np.float64)
    faces = (
        (0, 1, 3, 2),
        (4, 6, 7, 5),
        (0, 4, 5, 1),
        (2, 3, 7, 6),
        (0, 2, 6, 4),
        (1, 5, 7, 3),
    )
    tris = []
    for a, b, d, e in faces:
        tris.append(np.array((c[a], c[b], c[d])))
        tris.append(np.array((c[a], c[d], c[e])))
    return tris


def _quad(x0: float, x1: float, z0: float, z1: float, y: float) -> List[np.ndarray]:
    a, b, c, d = (x0, y, z0), (x1, y, z0), (x1, y, z1), (x0, y, z1)
    return [np.array((a, b, c)), np.array((a, c, d))]


def _coin(center: Vec3) -> List[np.ndarray]:
    radius, half = COIN_DIAMETER / 2.0, COIN_THICKNESS / 2.0
    angles = np.linspace(0.0, 2.0 * math.pi, COIN_SEGMENTS, endpoint=False)
    ring = [(center.y + radius * math.cos(t), center.z + radius * math.sin(t)) for t in angles]
    tris = []
    for i, (y0, z0) in enumerate(ring):
        y1, z1 = ring[(i + 1) % COIN_SEGMENTS]
        for x in (center.x - half, center.x + half):
            tris.append(np.array(((x, center.y, center.z), (x, y0, z0), (x, y1, z1))))
        left, right = center.x - half, center.x + half
        tris.append(np.array(((left, y0, z0), (right, y0, z0), (right, y1, z1))))
        tris.append(np.array(((left, y0, z0), (right, y1, z1), (left, y1, z1))))
    return tris


def scene_triangles(view: SceneView, rig: CameraRig) -> Tuple[np.ndarray, np.ndarray]:
    """Return (T, 3, 3) world triangles and their (T, 3) colors."""
    tris: List[np.ndarray] = []
    colors: List[Triple] = []

    def add(items: List[np.ndarray], color: Triple):
        tris.extend(items)
        colors.extend([color] * len(items))

    inner = view.arena_half_extent
    outer = inner + view.border_width
    ground = outer + rig.far
    add(_quad(-ground, ground, -ground, ground, 0.0), GROUND_COLOR)
    add(_quad(-outer, outer, inner, outer, BORDER_LIFT), BORDER_COLOR)
    add(_quad(-outer, outer, -outer, -inner, BORDER_LIFT), BORDER_COLOR)
    add(_quad(inner, outer, -inner, inner, BORDER_LIFT), BORDER_COLOR)
    add(_quad(-outer, -inner, -inner, inner, BORDER_LIFT), BORDER_COLOR)

    width, height, length = AGENT_BODY
    pos = view.agent_pos
    center = (pos.x, pos.y + height / 2, pos.z)
    add(_box(center, (width / 2, height / 2, length / 2), view.agent_yaw), AGENT_COLOR)
    for kind, position in view.objects:
        if kind == KIND_COIN:
            add(_coin(position), COIN_COLOR)
        else:
            half = CUBE_EDGE / 2.0
            add(_box(position.as_tuple(), (half, half, half)), CUBE_COLOR)
    return np.array(tris, dtype=np.float64), np.array(colors, dtype=np.float64)


def _clip_near(poly: np.ndarray, near: float) -> List[np.ndarray]:
    """Clip a camera space triangle against z >= near and fan triangulate."""
    out = []
    count = len(poly)
    for i in range(count):
        cur, nxt = poly[i], poly[(i + 1) % count]
        cur_in, nxt_in = cur[2] >= near, nxt[2] >= near
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = (near - cur[2]) / (nxt[2] - cur[2])
            out.append(cur + t * (nxt - cur))
    return [np.array((out[0], out[i], out[i + 1])) for i in range(1, len(out) - 1)]


class Rasterizer:
    """Z-buffered flat shaded triangle rasterizer with a per call framebuffer."""

    def __init__(self, rig: CameraRig, size: int = RENDER_SIZE):
        """Init."""
        self.rig = rig
        self.size = size
        self.focal = rig.focal(size)
        centers = np.arange(size, dtype=np.float64) + 0.5
        self._px, self._py = np.meshgrid(centers, centers)

    def render(self, view: SceneView) -> np.ndarray:
        """Render a (size, size, 3) float64 image of the scene."""
        size = self.size
        color = np.empty((size, size, IMAGE_CHANNELS), dtype=np.float64)
        color[:] = SKY_COLOR
        depth = np.full((size, size), np.inf)

        tris, colors = scene_triangles(view, self.rig)
        basis = self.rig.basis(view.agent_yaw)
        eye = self.rig.position(view.agent_pos, view.agent_yaw)
        cam = (tris - eye) @ basis.T

        near, far = self.rig.near, self.rig.far
        for tri, rgb in zip(cam, colors):
            z = tri[:, 2]
            if np.all(z < near) or np.all(z > far):
                continue
            pieces = [tri] if np.all(z >= near) else _clip_near(tri, near)
            for piece in pieces:
                self._fill(piece, rgb, color, depth)
        return color

    def _fill(self, tri: np.ndarray, rgb: np.ndarray, color: np.ndarray, depth: np.ndarray):
        half = self.size / 2.0
        z = tri[:, 2]
        sx = half + self.focal * tri[:, 0] / z
        sy = half - self.focal * tri[:, 1] / z
        area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0])
        if abs(area) < 1e-12:
            return
        x0 = max(int(math.floor(sx.min() - 0.5)), 0)
        x1 = min(int(math.ceil(sx.max() - 0.5)), self.size - 1)
        y0 = max(int(math.floor(sy.min() - 0.5)), 0)
        y1 = min(int(math.ceil(sy.max() - 0.5)), self.size - 1)
        if x0 > x1 or y0 > y1:
            return
        px = self._px[y0 : y1 + 1, x0 : x1 + 1]
        py = self._py[y0 : y1 + 1, x0 : x1 + 1]
        w0 = ((sx[1] - px) * (sy[2] - py) - (sx[2] - px) * (sy[1] - py)) / area
        w1 = ((sx[2] - px) * (sy[0] - py) - (sx[0] - px) * (sy[2] - py)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            return
        pixel_depth = 1.0 / (w0 / z[0] + w1 / z[1] + w2 / z[2])
        region = depth[y0 : y1 + 1, x0 : x1 + 1]
        visible = inside & (pixel_depth < region)
        region[visible] = pixel_depth[visible]
        color[y0 : y1 + 1, x0 : x1 + 1][visible] = rgb


def downsample(image: np.ndarray, factor: int = 2) -> np.ndarray:
    """Box filter an image by an integer factor."""
    h, w, c = image.shape
    return image.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))


def render_scene(view: SceneView, rig: CameraRig) -> np.ndarray:
    """Render at 168x168 and box filter to the 84x84x3 observation."""
    image = downsample(Rasterizer(rig, RENDER_SIZE).render(view), RENDER_SIZE // IMAGE_SIZE)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def observe_visual(state: WorldState, rig: CameraRig, cfg: SimConfig) -> np.ndarray:
    """Render the third person view of a world state."""
    return render_scene(SceneView.from_state(state, cfg), rig)


def ppm_bytes(image: np.ndarray) -> bytes:
    """Encode an RGB image with values in [0, 1] as binary PPM (P6)."""
    h, w, _ = image.shape
    pixels = np.round(255.0 * np.clip(image, 0.0, 1.0)).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_ppm(image: np.ndarray, path: Union[str, Path]):
    """Write an observation image to a PPM file."""
    try:
        Path(path).write_bytes(ppm_bytes(image))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc
