"""Quasi-static object mechanics and qualitative spatial predicates.

Objects are upright boxes around their footprint center: an instance at
``position`` with yaw ``r`` occupies the axis-aligned bound of its rotated
footprint, base at ``position.z``.  There is no dynamics integration; after
every mutation :func:`settle` drops each free object onto the highest
surface (or container floor) beneath its footprint center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable

from playroom.catalog import ObjectClass, Shape
from playroom.errors import IdenticalOperands, MissingObserver, UnknownInstance

if TYPE_CHECKING:  # pragma: no cover - typing only
    from playroom.world import ObjectInstance, Scene

CONTACT_EPS = 1e-3
# Near(a, b) compares AABB-center distance to this multiple of the summed
# footprint radii, so "near" scales with how big the two things are.
NEAR_RADIUS_FACTOR = 1.5
# Open boxes have walls and floor 10% of the corresponding extent thick.
WALL_FRACTION = 0.1
_FIT_EPS = 1e-9


class Relation(str, Enum):
    ON = "on"
    IN = "in"
    UNDER = "under"
    NEAR = "near"
    TOUCHING = "touching"
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    BEHIND = "behind"
    IN_FRONT_OF = "in_front_of"


OBSERVER_RELATIONS = frozenset(
    {Relation.LEFT_OF, Relation.RIGHT_OF, Relation.BEHIND, Relation.IN_FRONT_OF}
)


@dataclass(frozen=True)
class Aabb:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    @property
    def center(self) -> tuple[float, float, float]:
        return (
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
            (self.min[2] + self.max[2]) / 2.0,
        )

    @property
    def footprint_center(self) -> tuple[float, float]:
        return (self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0

    def contains_point(self, p: tuple[float, float, float]) -> bool:
        return all(self.min[i] <= p[i] <= self.max[i] for i in range(3))

    def contains_point_xy(self, x: float, y: float) -> bool:
        return self.min[0] <= x <= self.max[0] and self.min[1] <= y <= self.max[1]

    def overlaps_xy(self, other: "Aabb") -> bool:
        """Strict footprint overlap; sharing only an edge does not count."""
        return (
            self.min[0] < other.max[0] and other.min[0] < self.max[0]
            and self.min[1] < other.max[1] and other.min[1] < self.max[1]
        )

    def fits_inside_xy(self, other: "Aabb") -> bool:
        return (
            self.min[0] >= other.min[0] - _FIT_EPS
            and self.max[0] <= other.max[0] + _FIT_EPS
            and self.min[1] >= other.min[1] - _FIT_EPS
            and self.max[1] <= other.max[1] + _FIT_EPS
        )


def _axis_gap(amin: float, amax: float, bmin: float, bmax: float) -> float:
    return max(amin - bmax, bmin - amax, 0.0)


def horizontal_gap(a: Aabb, b: Aabb) -> float:
    """Euclidean distance between the two footprint rectangles (0 if they overlap)."""
    gx = _axis_gap(a.min[0], a.max[0], b.min[0], b.max[0])
    gy = _axis_gap(a.min[1], a.max[1], b.min[1], b.max[1])
    return math.hypot(gx, gy)


def aabb_distance(a: Aabb, b: Aabb) -> float:
    gx = _axis_gap(a.min[0], a.max[0], b.min[0], b.max[0])
    gy = _axis_gap(a.min[1], a.max[1], b.min[1], b.max[1])
    gz = _axis_gap(a.min[2], a.max[2], b.min[2], b.max[2])
    return math.sqrt(gx * gx + gy * gy + gz * gz)


def footprint_radius(a: Aabb) -> float:
    """Half the diagonal of the footprint rectangle."""
    return math.hypot(a.max[0] - a.min[0], a.max[1] - a.min[1]) / 2.0


def rotated_half_extents(extents: tuple[float, float, float], yaw: float) -> tuple[float, float]:
    """Axis-aligned half-widths of a yaw-rotated footprint."""
    ex, ey, _ = extents
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    return (ex * c + ey * s) / 2.0, (ex * s + ey * c) / 2.0


def aabb_of(instance: "ObjectInstance", cls: ObjectClass) -> Aabb:
    """World AABB; ``position`` is the footprint center at base height."""
    x, y, z = instance.position
    hx, hy = rotated_half_extents(cls.extents, instance.yaw)
    return Aabb((x - hx, y - hy, z), (x + hx, y + hy, z + cls.extents[2]))


def cavity_aabb(instance: "ObjectInstance", cls: ObjectClass) -> Aabb:
    """Interior AABB of a container: open top, walls per ``WALL_FRACTION``.

    The cavity ignores yaw-inflation on purpose: containers in practice sit
    at right angles, where the rotated bound is exact.
    """
    if not cls.is_container:
        raise ValueError(f"{cls.class_id} is not a container")
    ex, ey, ez = cls.extents
    inner_x = ex * (1.0 - 2.0 * WALL_FRACTION)
    inner_y = ey * (1.0 - 2.0 * WALL_FRACTION)
    if instance.yaw_quarter_turns % 2 == 1:
        inner_x, inner_y = inner_y, inner_x
    x, y, z = instance.position
    return Aabb(
        (x - inner_x / 2.0, y - inner_y / 2.0, z + ez * WALL_FRACTION),
        (x + inner_x / 2.0, y + inner_y / 2.0, z + ez),
    )


# -- settling ----------------------------------------------------------------


def settle(scene: "Scene") -> "Scene":
    """Drop every free object onto its best support; idempotent.

    Processing goes bottom-up (current base height, then instance id).  For
    each object the candidate rests are the floor, container cavity floors
    the footprint fits into, and tops of footprints containing this
    object's center.  Highest candidate not above the current base wins;
    ties resolve by ascending supporter id.  Settling never raises anything.
    """
    order = sorted(
        (inst for inst in scene.instances if inst.held_by is None),
        key=lambda inst: (inst.position[2], inst.instance_id),
    )
    settled: list["ObjectInstance"] = []
    for inst in order:
        cls = scene.catalog.get(inst.class_id)
        box = aabb_of(inst, cls)
        cx, cy = box.footprint_center
        base = inst.position[2]
        # (rest_z, supporter_id or None, container or None)
        candidates: list[tuple[float, int | None, int | None]] = [(0.0, None, None)]
        for below in settled:
            bcls = scene.catalog.get(below.class_id)
            bbox = aabb_of(below, bcls)
            if bcls.is_container:
                cavity = cavity_aabb(below, bcls)
                if cavity.contains_point_xy(cx, cy) and box.fits_inside_xy(cavity):
                    rest = cavity.min[2]
                    if rest <= base + _FIT_EPS:
                        candidates.append((rest, below.instance_id, below.instance_id))
                    continue
            if bbox.contains_point_xy(cx, cy):
                rest = bbox.max[2]
                if rest <= base + _FIT_EPS:
                    candidates.append((rest, below.instance_id, None))
        rest_z, supporter, _ = max(
            candidates, key=lambda c: (c[0], -(c[1] if c[1] is not None else -1))
        )
        inst.position = (inst.position[0], inst.position[1], rest_z)
        inst.supported_by = supporter
        settled.append(inst)
    # containment is a property of the final pose, not of the support edge
    for inst in order:
        inst.contained_in = _containing(scene, inst, settled)
    return scene


def _containing(
    scene: "Scene", inst: "ObjectInstance", others: Iterable["ObjectInstance"]
) -> int | None:
    cls = scene.catalog.get(inst.class_id)
    center = aabb_of(inst, cls).center
    best: tuple[float, int] | None = None
    for other in others:
        if other.instance_id == inst.instance_id:
            continue
        ocls = scene.catalog.get(other.class_id)
        if not ocls.is_container:
            continue
        cavity = cavity_aabb(other, ocls)
        if cavity.contains_point(center):
            key = (ocls.volume, other.instance_id)
            if best is None or key < best:
                best = key
    return best[1] if best else None


def support_graph(scene: "Scene") -> dict[int, int | None]:
    """Map of every non-held instance to its supporter (None = floor)."""
    return {
        inst.instance_id: inst.supported_by
        for inst in scene.instances
        if inst.held_by is None
    }


def support_related(scene: "Scene", a: int, b: int) -> bool:
    """True when the pair is exempt from the separation buffer.

    Exempt pairs: one is in the support/containment ancestry of the other,
    or both rest (transitively) on a common non-floor ancestor.
    """
    anc_a = _ancestors(scene, a)
    anc_b = _ancestors(scene, b)
    if b in anc_a or a in anc_b:
        return True
    return bool(anc_a & anc_b)


def _ancestors(scene: "Scene", instance_id: int) -> set[int]:
    seen: set[int] = set()
    current = scene.instance(instance_id)
    while True:
        nxt = current.supported_by if current.supported_by is not None else current.contained_in
        if nxt is None or nxt in seen:
            return seen
        seen.add(nxt)
        current = scene.instance(nxt)


# -- predicates ---------------------------------------------------------------


def contacts(scene: "Scene") -> set[tuple[int, int]]:
    """Unordered id pairs whose AABBs are within ``CONTACT_EPS``."""
    out: set[tuple[int, int]] = set()
    items = [
        (inst.instance_id, aabb_of(inst, scene.catalog.get(inst.class_id)))
        for inst in scene.instances
    ]
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if aabb_distance(items[i][1], items[j][1]) <= CONTACT_EPS:
                pair = (items[i][0], items[j][0])
                out.add(pair if pair[0] < pair[1] else (pair[1], pair[0]))
    return out


def eval_predicate(
    scene: "Scene",
    relation: Relation | str,
    a: int,
    b: int,
    observer: tuple[float, float, float] | None = None,
) -> bool:
    """Evaluate one qualitative relation between two instances.

    ``observer`` is an (x, y, heading) pose, required for the four
    viewpoint-dependent relations.

    Raises:
        IdenticalOperands: ``a == b``.
        UnknownInstance: either id is not in the scene.
        MissingObserver: directional relation without an observer pose.
    """
    rel = Relation(relation)
    if a == b:
        raise IdenticalOperands(f"relation {rel.value} needs two distinct instances")
    inst_a = scene.instance(a)
    inst_b = scene.instance(b)
    cls_a = scene.catalog.get(inst_a.class_id)
    cls_b = scene.catalog.get(inst_b.class_id)
    box_a = aabb_of(inst_a, cls_a)
    box_b = aabb_of(inst_b, cls_b)

    if rel in OBSERVER_RELATIONS:
        if observer is None:
            raise MissingObserver(f"{rel.value} requires an observer pose")
        return _directional(rel, box_a, box_b, observer)

    if rel is Relation.ON:
        return (
            inst_a.supported_by == b
            and abs(box_a.min[2] - box_b.max[2]) <= CONTACT_EPS
            and box_b.contains_point_xy(*box_a.footprint_center)
        )
    if rel is Relation.IN:
        if not cls_b.is_container:
            return False
        return cavity_aabb(inst_b, cls_b).contains_point(box_a.center)
    if rel is Relation.UNDER:
        return box_a.max[2] <= box_b.min[2] + CONTACT_EPS and box_a.overlaps_xy(box_b)
    if rel is Relation.NEAR:
        ca, cb = box_a.center, box_b.center
        dist = math.dist(ca, cb)
        return dist <= NEAR_RADIUS_FACTOR * (footprint_radius(box_a) + footprint_radius(box_b))
    if rel is Relation.TOUCHING:
        return aabb_distance(box_a, box_b) <= CONTACT_EPS
    raise ValueError(f"unhandled relation {rel}")  # pragma: no cover


def _directional(
    rel: Relation,
    box_a: Aabb,
    box_b: Aabb,
    observer: tuple[float, float, float],
) -> bool:
    """Compare AABB centers in the observer's heading frame."""
    _, _, heading = observer
    fx, fy = math.cos(heading), math.sin(heading)
    lx, ly = -fy, fx  # left-hand direction
    ax, ay, _ = box_a.center
    bx, by, _ = box_b.center
    dx, dy = ax - bx, ay - by
    forward = dx * fx + dy * fy
    left = dx * lx + dy * ly
    if rel is Relation.LEFT_OF:
        return left > 0.0
    if rel is Relation.RIGHT_OF:
        return left < 0.0
    if rel is Relation.BEHIND:
        return forward > 0.0
    return forward < 0.0  # IN_FRONT_OF
