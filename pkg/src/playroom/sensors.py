"""Ray-cast cameras: depth, instance segmentation, surface normals, RGB.

Four stationary corner cameras watch the room.  Rendering is analytic
(ray vs. AABB / sphere / cylinder, nearest hit, no antialiasing) and a pure
function of (scene, camera, agent poses), so identical states produce
bit-identical frames regardless of how pixels are batched.

Shading is flat Lambert: albedo is the class color, lit by one directional
light along normalized (1, 1, 2).  Reserved instance ids: 0 background,
1 floor, 2 child avatar, 3 parent avatar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from collections.abc import Mapping
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from PIL import Image

from playroom.agents import (
    AGENT_RENDER_ID,
    CHILD,
    PARENT,
    AgentState,
    Posture,
    Simulation,
)
from playroom.catalog import Shape
from playroom.errors import BadCamera, BadCommand
from playroom.kinetics import Aabb, cavity_aabb
from playroom.world import GridSpec, Scene

AgentsArg = Iterable[AgentState] | Mapping[str, AgentState] | None

FLOOR_ID = 1
DUMP_MAGIC = b"ABCDEFRM"
LIGHT_DIR = np.array([1.0, 1.0, 2.0]) / math.sqrt(6.0)
FLOOR_RGB = (0.80, 0.80, 0.80)
AVATAR_RGB = {CHILD: (0.94, 0.55, 0.70), PARENT: (0.15, 0.32, 0.75)}
# Avatar body cylinders stand a head above the eyes.
AVATAR_RADIUS = 0.25
AVATAR_HEIGHT = {Posture.STANDING: 1.5, Posture.CRAWLING: 0.6}

DEFAULT_FOV_DEG = 70.0
DEFAULT_RESOLUTION = (64, 64)
UI_RESOLUTION = (256, 256)
CAMERA_HEIGHT = 3.0
_EPS = 1e-9


@dataclass(frozen=True)
class CameraSpec:
    """A pinhole camera: where it sits, what it looks at, how wide, how fine."""

    camera_id: str
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    vertical_fov: float = DEFAULT_FOV_DEG
    resolution: tuple[int, int] = DEFAULT_RESOLUTION

    def __post_init__(self):
        if not 10.0 < self.vertical_fov < 170.0:
            raise BadCamera(f"vertical fov {self.vertical_fov} outside (10, 170)")
        width, height = self.resolution
        if not (isinstance(width, int) and isinstance(height, int)):
            raise BadCamera("resolution must be integer pixels")
        if not (1 <= width <= 1024 and 1 <= height <= 1024):
            raise BadCamera(f"resolution {self.resolution} outside 1..1024 per side")
        if tuple(self.position) == tuple(self.look_at):
            raise BadCamera("camera position and look_at coincide")

    def to_doc(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "position": list(self.position),
            "look_at": list(self.look_at),
            "vertical_fov": self.vertical_fov,
            "resolution": list(self.resolution),
        }

    @staticmethod
    def from_doc(doc: dict) -> "CameraSpec":
        try:
            return CameraSpec(
                camera_id=doc["camera_id"],
                position=tuple(doc["position"]),
                look_at=tuple(doc["look_at"]),
                vertical_fov=float(doc.get("vertical_fov", DEFAULT_FOV_DEG)),
                resolution=tuple(doc.get("resolution", DEFAULT_RESOLUTION)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BadCamera(f"bad camera document: {exc}") from None


@dataclass(frozen=True)
class FrameSet:
    """One camera's buffers at one tick; arrays are (height, width)-indexed."""

    tick: int
    camera_id: str
    depth: np.ndarray  # float64, +inf where nothing is hit
    instance: np.ndarray  # int32, 0 background
    normal: np.ndarray  # float64, (h, w, 3), zero where background
    rgb: np.ndarray  # float64 linear, (h, w, 3)


def default_cameras(
    grid: GridSpec, resolution: tuple[int, int] = DEFAULT_RESOLUTION
) -> tuple[CameraSpec, ...]:
    """Four corner cameras at height 3, each aimed at the room center.

    The set is symmetric under quarter-turn room rotation, and their frusta
    jointly see every floor cell center.
    """
    x0, y0, x1, y1 = grid.bounds()
    center = ((x0 + x1) / 2.0, (y0 + y1) / 2.0, 0.5)
    corners = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
    return tuple(
        CameraSpec(
            camera_id=f"cam{i}",
            position=(cx, cy, CAMERA_HEIGHT),
            look_at=center,
            resolution=resolution,
        )
        for i, (cx, cy) in enumerate(corners)
    )


# -- scene geometry ----------------------------------------------------------


@dataclass
class _Geometry:
    """Primitive soup for one frame: parallel arrays per primitive type."""

    floor_bounds: tuple[float, float, float, float]
    box_ids: list[int] = field(default_factory=list)
    box_min: list[tuple[float, float, float]] = field(default_factory=list)
    box_max: list[tuple[float, float, float]] = field(default_factory=list)
    sphere_ids: list[int] = field(default_factory=list)
    sphere_center: list[tuple[float, float, float]] = field(default_factory=list)
    sphere_radius: list[float] = field(default_factory=list)
    cyl_ids: list[int] = field(default_factory=list)
    cyl_center: list[tuple[float, float]] = field(default_factory=list)
    cyl_radius: list[float] = field(default_factory=list)
    cyl_z: list[tuple[float, float]] = field(default_factory=list)
    albedo: dict[int, tuple[float, float, float]] = field(default_factory=dict)

    def add_box(self, instance_id: int, box: Aabb) -> None:
        self.box_ids.append(instance_id)
        self.box_min.append(box.min)
        self.box_max.append(box.max)


def _open_box_slabs(outer: Aabb, cavity: Aabb) -> list[Aabb]:
    """An open container as five thin boxes: floor slab plus four walls."""
    (ox0, oy0, oz0), (ox1, oy1, oz1) = outer.min, outer.max
    (cx0, cy0, cz0), (cx1, cy1, _) = cavity.min, cavity.max
    return [
        Aabb((ox0, oy0, oz0), (ox1, oy1, cz0)),  # floor of the cavity
        Aabb((ox0, oy0, cz0), (cx0, oy1, oz1)),  # -x wall
        Aabb((cx1, oy0, cz0), (ox1, oy1, oz1)),  # +x wall
        Aabb((cx0, oy0, cz0), (cx1, cy0, oz1)),  # -y wall
        Aabb((cx0, cy1, cz0), (cx1, oy1, oz1)),  # +y wall
    ]


def _gather(scene: Scene, agents: AgentsArg) -> _Geometry:
    if isinstance(agents, Mapping):
        agents = agents.values()
    geo = _Geometry(floor_bounds=scene.grid.bounds())
    geo.albedo[FLOOR_ID] = FLOOR_RGB
    for inst in scene.instances:
        cls = scene.catalog.get(inst.class_id)
        box = scene.aabb(inst.instance_id)
        geo.albedo[inst.instance_id] = cls.color_rgb
        if cls.shape is Shape.BOX:
            geo.add_box(inst.instance_id, box)
        elif cls.shape is Shape.OPEN_BOX:
            for slab in _open_box_slabs(box, cavity_aabb(inst, cls)):
                geo.add_box(inst.instance_id, slab)
        elif cls.shape is Shape.SPHERE:
            cx = (box.min[0] + box.max[0]) / 2.0
            cy = (box.min[1] + box.max[1]) / 2.0
            radius = (box.max[2] - box.min[2]) / 2.0
            geo.sphere_ids.append(inst.instance_id)
            geo.sphere_center.append((cx, cy, box.min[2] + radius))
            geo.sphere_radius.append(radius)
        else:  # Shape.CYLINDER
            cx = (box.min[0] + box.max[0]) / 2.0
            cy = (box.min[1] + box.max[1]) / 2.0
            geo.cyl_ids.append(inst.instance_id)
            geo.cyl_center.append((cx, cy))
            geo.cyl_radius.append((box.max[0] - box.min[0]) / 2.0)
            geo.cyl_z.append((box.min[2], box.max[2]))
    for agent in agents or ():
        render_id = AGENT_RENDER_ID[agent.agent_id]
        geo.albedo[render_id] = AVATAR_RGB[agent.agent_id]
        geo.cyl_ids.append(render_id)
        geo.cyl_center.append((agent.position[0], agent.position[1]))
        geo.cyl_radius.append(AVATAR_RADIUS)
        geo.cyl_z.append((0.0, AVATAR_HEIGHT[agent.posture]))
    return geo


# -- ray generation and intersection -----------------------------------------


def camera_rays(camera: CameraSpec) -> tuple[np.ndarray, np.ndarray]:
    """(origin (3,), directions (h, w, 3) unit vectors), pixel centers."""
    origin = np.array(camera.position, dtype=np.float64)
    forward = np.array(camera.look_at, dtype=np.float64) - origin
    forward /= np.linalg.norm(forward)
    up_hint = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up_hint)
    if np.linalg.norm(right) < _EPS:  # looking straight up or down
        up_hint = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, up_hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    width, height = camera.resolution
    tan_half = math.tan(math.radians(camera.vertical_fov) / 2.0)
    aspect = width / height
    xs = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * tan_half * aspect
    ys = (1.0 - (np.arange(height) + 0.5) / height * 2.0) * tan_half
    dirs = (
        forward[None, None, :]
        + xs[None, :, None] * right[None, None, :]
        + ys[:, None, None] * up[None, None, :]
    )
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    return origin, dirs


# Pixels are traced in fixed-size chunks to bound broadcast temporaries;
# every operation is elementwise per pixel, so chunking cannot change bits.
_CHUNK = 8192


def _merge(
    t: np.ndarray,
    ids: np.ndarray,
    normal: np.ndarray,
    best: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> None:
    best_t, best_id, best_n = best
    closer = t < best_t
    best_t[closer] = t[closer]
    best_id[closer] = ids[closer] if ids.ndim else ids
    best_n[closer] = normal[closer]


def _trace_boxes(
    origin: np.ndarray, dirs: np.ndarray, geo: _Geometry, best: tuple
) -> None:
    """Slab tests against every box at once: (pixels, boxes, 3) broadcast."""
    bmin = np.asarray(geo.box_min)
    bmax = np.asarray(geo.box_max)
    ids = np.asarray(geo.box_ids, dtype=np.int32)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_lo = (bmin[None, :, :] - origin[None, None, :]) * inv[:, None, :]
        t_hi = (bmax[None, :, :] - origin[None, None, :]) * inv[:, None, :]
    t_near_axis = np.minimum(t_lo, t_hi)
    t_far_axis = np.maximum(t_lo, t_hi)
    if not dirs.all():
        # A zero direction component inside a slab gives -inf/+inf (fine); on
        # a slab boundary it gives nan, which must read as "always inside".
        t_near_axis = np.nan_to_num(t_near_axis, nan=-np.inf)
        t_far_axis = np.nan_to_num(t_far_axis, nan=np.inf)
    t_near = np.max(t_near_axis, axis=2)
    t_far = np.min(t_far_axis, axis=2)
    hit = (t_near <= t_far) & (t_near > _EPS)
    t = np.where(hit, t_near, np.inf)
    pick = np.argmin(t, axis=1)
    rows = np.arange(len(dirs))
    t_best = t[rows, pick]
    # Entry axis (hence face normal) resolved only for the winning box.
    axis_best = np.argmax(t_near_axis[rows, pick, :], axis=1)
    normal = np.zeros_like(dirs)
    normal[rows, axis_best] = -np.sign(dirs[rows, axis_best])
    _merge(t_best, ids[pick], normal, best)


def _trace_spheres(
    origin: np.ndarray, dirs: np.ndarray, geo: _Geometry, best: tuple
) -> None:
    centers = np.asarray(geo.sphere_center)
    radii = np.asarray(geo.sphere_radius)
    ids = np.asarray(geo.sphere_ids, dtype=np.int32)
    oc = origin[None, :] - centers  # (spheres, 3)
    b = dirs @ oc.T  # (pixels, spheres)
    c = np.einsum("sk,sk->s", oc, oc) - radii * radii
    disc = b * b - c[None, :]
    t = -b - np.sqrt(np.maximum(disc, 0.0))
    hit = (disc > 0.0) & (t > _EPS)
    t = np.where(hit, t, np.inf)
    pick = np.argmin(t, axis=1)
    rows = np.arange(len(dirs))
    t_best = t[rows, pick]
    with np.errstate(invalid="ignore"):
        points = origin[None, :] + t_best[:, None] * dirs
        normal = (points - centers[pick]) / radii[pick][:, None]
    normal[~np.isfinite(t_best)] = 0.0
    _merge(t_best, ids[pick], normal, best)


def _trace_cylinders(
    origin: np.ndarray, dirs: np.ndarray, geo: _Geometry, best: tuple
) -> None:
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    for instance_id, (cx, cy), radius, (z0, z1) in zip(
        geo.cyl_ids, geo.cyl_center, geo.cyl_radius, geo.cyl_z
    ):
        ox = origin[0] - cx
        oy = origin[1] - cy
        # Curved side.
        a = dx * dx + dy * dy
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - radius * radius
        disc = b * b - a * c
        with np.errstate(divide="ignore", invalid="ignore"):
            t_side = (-b - np.sqrt(np.maximum(disc, 0.0))) / a
            pz = origin[2] + t_side * dz
        hit = (disc > 0.0) & (a > _EPS) & (t_side > _EPS) & (pz >= z0) & (pz <= z1)
        t_side = np.where(hit, t_side, np.inf)
        normal = np.zeros_like(dirs)
        with np.errstate(invalid="ignore"):
            normal[hit, 0] = (ox + t_side[hit] * dx[hit]) / radius
            normal[hit, 1] = (oy + t_side[hit] * dy[hit]) / radius
        ids = np.full(len(dirs), instance_id, dtype=np.int32)
        _merge(t_side, ids, normal, best)
        # Flat caps.
        for z_cap, nz in ((z0, -1.0), (z1, 1.0)):
            with np.errstate(divide="ignore", invalid="ignore"):
                t_cap = (z_cap - origin[2]) / dz
                qx = ox + t_cap * dx
                qy = oy + t_cap * dy
            hit_cap = (t_cap > _EPS) & (qx * qx + qy * qy <= radius * radius)
            t_cap = np.where(hit_cap, t_cap, np.inf)
            n_cap = np.zeros_like(dirs)
            n_cap[:, 2] = nz
            _merge(t_cap, ids, n_cap, best)


def _trace_chunk(
    geo: _Geometry, origin: np.ndarray, dirs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(dirs)
    best = (np.full(n, np.inf), np.zeros(n, dtype=np.int32), np.zeros((n, 3)))
    # Bounded floor rectangle at z=0.
    x0, y0, x1, y1 = geo.floor_bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = -origin[2] / dirs[:, 2]
        fx = origin[0] + t_floor * dirs[:, 0]
        fy = origin[1] + t_floor * dirs[:, 1]
    hit = (t_floor > _EPS) & (fx >= x0) & (fx <= x1) & (fy >= y0) & (fy <= y1)
    t_floor = np.where(hit, t_floor, np.inf)
    n_floor = np.zeros((n, 3))
    n_floor[:, 2] = 1.0
    _merge(t_floor, np.full(n, FLOOR_ID, dtype=np.int32), n_floor, best)
    if geo.box_ids:
        _trace_boxes(origin, dirs, geo, best)
    if geo.sphere_ids:
        _trace_spheres(origin, dirs, geo, best)
    if geo.cyl_ids:
        _trace_cylinders(origin, dirs, geo, best)
    return best


def _trace(
    geo: _Geometry, origin: np.ndarray, dirs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest hit per ray: (t, instance_id, normal) over flat (n, 3) dirs."""
    if len(dirs) <= _CHUNK:
        return _trace_chunk(geo, origin, dirs)
    parts = [
        _trace_chunk(geo, origin, dirs[i : i + _CHUNK])
        for i in range(0, len(dirs), _CHUNK)
    ]
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def _render_with(geo: _Geometry, tick: int, camera: CameraSpec) -> FrameSet:
    origin, dirs = camera_rays(camera)
    width, height = camera.resolution
    flat = dirs.reshape(-1, 3)
    t, ids, normals = _trace(geo, origin, flat)
    lambert = np.clip(normals @ LIGHT_DIR, 0.0, None)
    lut = np.zeros((max(geo.albedo, default=0) + 1, 3))
    for instance_id, color in geo.albedo.items():
        lut[instance_id] = color
    rgb = lut[ids] * lambert[:, None]
    return FrameSet(
        tick=tick,
        camera_id=camera.camera_id,
        depth=t.reshape(height, width),
        instance=ids.reshape(height, width),
        normal=normals.reshape(height, width, 3),
        rgb=rgb.reshape(height, width, 3),
    )


def render(
    scene: Scene,
    camera: CameraSpec,
    agents: AgentsArg = None,
    tick: int | None = None,
) -> FrameSet:
    """Render one camera: nearest analytic hit per pixel, flat Lambert RGB."""
    geo = _gather(scene, agents)
    return _render_with(geo, scene.tick if tick is None else tick, camera)


def render_all(
    scene: Scene,
    cameras: Iterable[CameraSpec],
    agents: AgentsArg = None,
) -> list[FrameSet]:
    geo = _gather(scene, agents)
    return [_render_with(geo, scene.tick, camera) for camera in cameras]


def capture_schedule(
    sim: Simulation,
    every_n_ticks: int,
    cameras: Iterable[CameraSpec] | None = None,
) -> Iterator[list[FrameSet]]:
    """Advance the simulation and yield all-camera batches every n ticks.

    Pull-driven: the simulation never advances past a capture nobody has
    consumed, which is the back-pressure contract.
    """
    if every_n_ticks < 1:
        raise BadCommand("capture interval must be a positive tick count")
    camera_list = tuple(cameras) if cameras is not None else default_cameras(sim.scene.grid)
    while True:
        for _ in range(every_n_ticks):
            sim.tick()
        yield render_all(sim.scene, camera_list, agents=sim.agents.values())


# -- frame dumps ---------------------------------------------------------------


def _plane_bytes(array: np.ndarray) -> bytes:
    return DUMP_MAGIC + array.astype("<f4").tobytes()


def read_plane(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    """Read back a raw float32 plane written by :func:`dump_frameset`."""
    blob = Path(path).read_bytes()
    magic, payload = blob[:8], blob[8:]
    if magic != DUMP_MAGIC:
        raise BadCamera(f"{path}: bad plane magic {magic!r}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape)


def dump_frameset(frame: FrameSet, directory: str | Path) -> list[Path]:
    """Write rgb (PNG), instance (16-bit PNG), depth and normal (raw planes)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{frame.camera_id}_t{frame.tick:06d}"
    paths: list[Path] = []

    rgb8 = (np.clip(frame.rgb, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    rgb_path = directory / f"{stem}_rgb.png"
    Image.fromarray(rgb8, mode="RGB").save(rgb_path)
    paths.append(rgb_path)

    instance_path = directory / f"{stem}_instance.png"
    Image.fromarray(frame.instance.astype(np.uint16)).save(instance_path)
    paths.append(instance_path)

    for name, plane in (("depth", frame.depth), ("normal", frame.normal)):
        path = directory / f"{stem}_{name}.bin"
        path.write_bytes(_plane_bytes(plane))
        paths.append(path)
    return paths


def frame_to_doc(frame: FrameSet) -> dict:
    """Wire form: base64 raw planes (used by Subscribe/Observe feeds)."""
    import base64

    height, width = frame.depth.shape

    def b64(array: np.ndarray) -> str:
        return base64.b64encode(array.astype("<f4").tobytes()).decode("ascii")

    return {
        "tick": frame.tick,
        "camera_id": frame.camera_id,
        "width": width,
        "height": height,
        "depth": b64(frame.depth),
        "instance": base64.b64encode(
            frame.instance.astype("<u2").tobytes()
        ).decode("ascii"),
        "normal": b64(frame.normal),
        "rgb": b64(frame.rgb),
    }
