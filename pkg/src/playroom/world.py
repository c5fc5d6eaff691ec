"""Room state: grid, object instances, procedural generation, metadata.

A scene is a flat floor divided into unit cells.  Placement keeps a
separation buffer between free-standing objects so nothing interpenetrates
and agents can move between things; objects may still touch once stacked
or contained, which the buffer rules treat as related pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

from playroom.catalog import Catalog, Category, ObjectClass, is_interactable, sample_class
from playroom.errors import BadGrid, Occupied, OutOfGrid, PlacementExhausted, UnknownInstance
from playroom.hashing import fnv1a_64
from playroom.kinetics import Aabb, aabb_of, horizontal_gap, settle
from playroom.rng import Rng

SEPARATION_BUFFER = 0.5
MAX_PLACEMENT_ATTEMPTS = 64
# Classes auto-placed against the walls before toys are scattered.
FURNITURE_CLASS_IDS = ("table", "shelf", "toy_chest")
FIRST_INSTANCE_ID = 10

LANE_CHILD = 0
LANE_PARENT = 1
LANE_WORLD = 2
LANE_META = 3

_QUARTER = math.pi / 2.0


@dataclass(frozen=True)
class GridSpec:
    width_cells: int = 10
    depth_cells: int = 10
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def n_cells(self) -> int:
        return self.width_cells * self.depth_cells

    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (
            x0,
            y0,
            x0 + self.width_cells * self.cell_size,
            y0 + self.depth_cells * self.cell_size,
        )

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        x0, y0 = self.origin
        return (x0 + (ix + 0.5) * self.cell_size, y0 + (iy + 0.5) * self.cell_size)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        x0, y0 = self.origin
        return (int((x - x0) // self.cell_size), int((y - y0) // self.cell_size))

    def in_grid(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width_cells and 0 <= iy < self.depth_cells

    def cell_index(self, ix: int, iy: int) -> int:
        return iy * self.width_cells + ix


@dataclass
class ObjectInstance:
    instance_id: int
    class_id: str
    category: Category
    position: tuple[float, float, float]  # footprint center, base height
    yaw: float
    spawn_position: tuple[float, float, float]
    held_by: str | None = None
    supported_by: int | None = None
    contained_in: int | None = None

    @property
    def yaw_quarter_turns(self) -> int:
        return round(self.yaw / _QUARTER) % 4


@dataclass
class Event:
    tick: int
    seq: int
    lane: int
    kind: str
    payload: dict

    def to_doc(self) -> dict:
        return {
            "tick": self.tick,
            "seq": self.seq,
            "lane": self.lane,
            "kind": self.kind,
            "payload": self.payload,
        }


@dataclass
class Scene:
    grid: GridSpec
    catalog: Catalog
    seed: int
    n_interactable: int
    instances: list[ObjectInstance] = field(default_factory=list)
    tick: int = 0
    rng: Rng = None  # type: ignore[assignment]
    events: list[Event] = field(default_factory=list)
    _next_id: int = FIRST_INSTANCE_ID
    _seq: int = 0

    def __post_init__(self):
        if self.rng is None:
            self.rng = Rng(self.seed)

    def instance(self, instance_id: int) -> ObjectInstance:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        raise UnknownInstance(f"no instance {instance_id} in scene")

    def has_instance(self, instance_id: int) -> bool:
        return any(inst.instance_id == instance_id for inst in self.instances)

    def cls_of(self, instance_id: int) -> ObjectClass:
        return self.catalog.get(self.instance(instance_id).class_id)

    def aabb(self, instance_id: int) -> Aabb:
        inst = self.instance(instance_id)
        return aabb_of(inst, self.catalog.get(inst.class_id))

    def allocate_id(self) -> int:
        out = self._next_id
        self._next_id += 1
        return out

    def emit(self, kind: str, payload: dict, lane: int = LANE_WORLD) -> Event:
        event = Event(tick=self.tick, seq=self._seq, lane=lane, kind=kind, payload=payload)
        self._seq += 1
        self.events.append(event)
        return event


# -- placement ----------------------------------------------------------------


def candidate_aabb(
    grid: GridSpec, cls: ObjectClass, center: tuple[float, float], yaw: float
) -> Aabb:
    from playroom.kinetics import rotated_half_extents

    hx, hy = rotated_half_extents(cls.extents, yaw)
    return Aabb(
        (center[0] - hx, center[1] - hy, 0.0),
        (center[0] + hx, center[1] + hy, cls.extents[2]),
    )


def in_bounds(grid: GridSpec, box: Aabb) -> bool:
    x0, y0, x1, y1 = grid.bounds()
    return box.min[0] >= x0 and box.min[1] >= y0 and box.max[0] <= x1 and box.max[1] <= y1


def placement_clear(scene: Scene, box: Aabb, ignore: set[int] | None = None) -> bool:
    """True when ``box`` keeps the separation buffer to every placed object."""
    ignore = ignore or set()
    for inst in scene.instances:
        if inst.instance_id in ignore or inst.held_by is not None:
            continue
        other = aabb_of(inst, scene.catalog.get(inst.class_id))
        if horizontal_gap(box, other) < SEPARATION_BUFFER:
            return False
    return True


def _place_instance(
    scene: Scene, cls: ObjectClass, center: tuple[float, float], yaw: float
) -> ObjectInstance:
    inst = ObjectInstance(
        instance_id=scene.allocate_id(),
        class_id=cls.class_id,
        category=cls.category,
        position=(center[0], center[1], 0.0),
        yaw=yaw,
        spawn_position=(center[0], center[1], 0.0),
    )
    scene.instances.append(inst)
    return inst


def generate_scene(
    catalog: Catalog,
    grid: GridSpec | None = None,
    n_interactable: int = 10,
    seed: int = 0,
) -> Scene:
    """Procedurally populate a room; same arguments, same room, always.

    Furniture goes first on seed-shuffled cells near the walls, then
    ``n_interactable`` uniformly sampled toys land on free cells by
    rejection sampling (at most ``MAX_PLACEMENT_ATTEMPTS`` candidate cells
    per object).

    Raises:
        BadGrid: non-positive dimensions or more objects than cells.
        PlacementExhausted: a candidate budget ran out.
    """
    grid = grid or GridSpec()
    if grid.width_cells <= 0 or grid.depth_cells <= 0 or grid.cell_size <= 0:
        raise BadGrid("grid dimensions and cell size must be positive")
    furniture = [cid for cid in FURNITURE_CLASS_IDS if cid in catalog]
    if not furniture:
        statics = [c.class_id for c in catalog.classes if c.category is Category.STATIC]
        furniture = statics[:3]
    if n_interactable < 0 or n_interactable + len(furniture) > grid.n_cells:
        raise BadGrid(
            f"cannot fit {n_interactable} objects plus furniture in {grid.n_cells} cells"
        )

    scene = Scene(grid=grid, catalog=catalog, seed=seed, n_interactable=n_interactable)
    rng = scene.rng

    band = _wall_band_cells(grid)
    for class_id in furniture:
        cls = catalog.get(class_id)
        order = list(band)
        rng.shuffle(order)
        _try_place(scene, cls, order, rng, what=class_id)

    all_cells = [(ix, iy) for iy in range(grid.depth_cells) for ix in range(grid.width_cells)]
    for _ in range(n_interactable):
        cls = sample_class(catalog, rng, is_interactable)
        cells = [all_cells[rng.randrange(len(all_cells))] for _ in range(MAX_PLACEMENT_ATTEMPTS)]
        _try_place(scene, cls, cells, rng, what=cls.class_id)

    settle(scene)
    return scene


def _wall_band_cells(grid: GridSpec) -> list[tuple[int, int]]:
    """Cells within two cells of a wall, in row-major order."""
    out = []
    for iy in range(grid.depth_cells):
        for ix in range(grid.width_cells):
            near_x = ix < 2 or ix >= grid.width_cells - 2
            near_y = iy < 2 or iy >= grid.depth_cells - 2
            if near_x or near_y:
                out.append((ix, iy))
    return out


def _try_place(
    scene: Scene,
    cls: ObjectClass,
    cells: list[tuple[int, int]],
    rng: Rng,
    what: str,
) -> ObjectInstance:
    attempts = 0
    for ix, iy in cells[:MAX_PLACEMENT_ATTEMPTS]:
        attempts += 1
        yaw = rng.randrange(4) * _QUARTER
        center = scene.grid.cell_center(ix, iy)
        box = candidate_aabb(scene.grid, cls, center, yaw)
        if in_bounds(scene.grid, box) and placement_clear(scene, box):
            return _place_instance(scene, cls, center, yaw)
    raise PlacementExhausted(
        f"no room for {what} after {attempts} attempts", attempts=attempts
    )


def spawn_object(scene: Scene, cls: ObjectClass, cell: tuple[int, int]) -> int:
    """Spawn one instance resting on the floor at a cell center.

    Raises:
        OutOfGrid: cell outside the grid or object overhangs the room.
        Occupied: separation buffer would be violated.
    """
    ix, iy = cell
    if not scene.grid.in_grid(ix, iy):
        raise OutOfGrid(f"cell {cell} outside {scene.grid.width_cells}x{scene.grid.depth_cells}")
    center = scene.grid.cell_center(ix, iy)
    yaw = 0.0
    box = candidate_aabb(scene.grid, cls, center, yaw)
    if not in_bounds(scene.grid, box):
        raise OutOfGrid(f"{cls.class_id} at {cell} would overhang the room")
    if not placement_clear(scene, box):
        raise Occupied(f"cell {cell} violates the separation buffer")
    inst = _place_instance(scene, cls, center, yaw)
    settle(scene)
    scene.emit(
        "spawn",
        {
            "instance_id": inst.instance_id,
            "class_id": cls.class_id,
            "cell": [ix, iy],
            "position": list(inst.position),
            "yaw": inst.yaw,
        },
    )
    return inst.instance_id


def teleport_instance(
    scene: Scene,
    instance_id: int,
    position: tuple[float, float, float],
    yaw: float | None = None,
    record: bool = True,
) -> None:
    """Move an instance directly (arrangement/replay primitive), then settle."""
    inst = scene.instance(instance_id)
    inst.position = position
    if yaw is not None:
        inst.yaw = yaw
    inst.held_by = None
    settle(scene)
    if record:
        scene.emit(
            "teleport",
            {
                "instance_id": instance_id,
                "position": list(inst.position),
                "yaw": inst.yaw,
            },
        )


def separation_violations(scene: Scene) -> list[tuple[int, int, float]]:
    """Floor-standing pairs closer than the buffer (id_a, id_b, gap).

    Stacked and contained instances are exempt: their lateral clearance is
    ruled by the supporter's footprint and the sibling gap, not by the floor
    separation rule, so a lid's slight overhang cannot poison its box's
    otherwise legal neighborhood.
    """
    out = []
    free = [
        inst
        for inst in scene.instances
        if inst.held_by is None
        and inst.supported_by is None
        and inst.contained_in is None
    ]
    for i in range(len(free)):
        for j in range(i + 1, len(free)):
            a, b = free[i], free[j]
            gap = horizontal_gap(
                aabb_of(a, scene.catalog.get(a.class_id)),
                aabb_of(b, scene.catalog.get(b.class_id)),
            )
            if gap < SEPARATION_BUFFER:
                out.append((a.instance_id, b.instance_id, gap))
    return out


def reset(scene: Scene, seed: int) -> Scene:
    """Fresh scene with the same catalog, grid, and object budget."""
    return generate_scene(scene.catalog, scene.grid, scene.n_interactable, seed)


# -- metadata -----------------------------------------------------------------


def scene_metadata(scene: Scene) -> dict:
    """Plain-JSON scene document; key order and float text are canonical."""
    return {
        "seed": scene.seed,
        "tick": scene.tick,
        "grid": {
            "width_cells": scene.grid.width_cells,
            "depth_cells": scene.grid.depth_cells,
            "cell_size": scene.grid.cell_size,
            "origin": list(scene.grid.origin),
        },
        "instances": [
            {
                "instance_id": inst.instance_id,
                "class_id": inst.class_id,
                "category": inst.category.value,
                "position": list(inst.position),
                "yaw": inst.yaw,
                "spawn_position": list(inst.spawn_position),
                "held_by": inst.held_by,
                "supported_by": inst.supported_by,
                "contained_in": inst.contained_in,
            }
            for inst in sorted(scene.instances, key=lambda i: i.instance_id)
        ],
    }


def canonical_json(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode(
        "utf-8"
    )


def scene_hash(scene: Scene) -> int:
    """64-bit FNV-1a over the canonical metadata bytes."""
    return fnv1a_64(canonical_json(scene_metadata(scene)))


def load_metadata(doc: dict, catalog: Catalog) -> Scene:
    """Rebuild a scene from its metadata document (fresh rng from seed)."""
    g = doc["grid"]
    grid = GridSpec(
        width_cells=g["width_cells"],
        depth_cells=g["depth_cells"],
        cell_size=g["cell_size"],
        origin=tuple(g["origin"]),
    )
    scene = Scene(
        grid=grid,
        catalog=catalog,
        seed=doc["seed"],
        n_interactable=sum(
            1 for r in doc["instances"] if r["category"] == Category.INTERACTABLE.value
        ),
        tick=doc["tick"],
    )
    for raw in doc["instances"]:
        inst = ObjectInstance(
            instance_id=raw["instance_id"],
            class_id=raw["class_id"],
            category=Category(raw["category"]),
            position=tuple(raw["position"]),
            yaw=raw["yaw"],
            spawn_position=tuple(raw["spawn_position"]),
            held_by=raw["held_by"],
            supported_by=raw["supported_by"],
            contained_in=raw["contained_in"],
        )
        scene.instances.append(inst)
        scene._next_id = max(scene._next_id, inst.instance_id + 1)
    return scene
