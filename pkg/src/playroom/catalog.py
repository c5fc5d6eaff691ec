"""Object class catalog: the closed vocabulary of things a room can hold.

A catalog file is UTF-8 JSON ``{"version": ..., "classes": [...]}``.  Class
records carry exactly the fields of :class:`ObjectClass`; unknown fields are
rejected so typos fail loudly instead of silently defaulting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from playroom.errors import EmptyFilter, ParseError, SchemaError
from playroom.rng import Rng

# Fixed 12-color palette; values are linear RGB used directly by the renderer.
PALETTE: dict[str, tuple[float, float, float]] = {
    "red": (0.84, 0.10, 0.11),
    "green": (0.18, 0.63, 0.22),
    "blue": (0.15, 0.32, 0.75),
    "yellow": (0.95, 0.83, 0.12),
    "orange": (0.93, 0.52, 0.10),
    "purple": (0.50, 0.25, 0.68),
    "pink": (0.94, 0.55, 0.70),
    "brown": (0.47, 0.30, 0.14),
    "black": (0.05, 0.05, 0.05),
    "white": (0.95, 0.95, 0.95),
    "gray": (0.55, 0.55, 0.55),
    "cyan": (0.12, 0.75, 0.80),
}


class Category(str, Enum):
    STATIC = "Static"
    INTERACTABLE = "Interactable"


class Shape(str, Enum):
    BOX = "Box"
    SPHERE = "Sphere"
    CYLINDER = "Cylinder"
    OPEN_BOX = "OpenBox"


@dataclass(frozen=True)
class ObjectClass:
    """Immutable template every spawned instance points back to."""

    class_id: str
    category: Category
    shape: Shape
    extents: tuple[float, float, float]  # full lengths along x, y, z
    color: str
    mass: float
    graspable: bool
    is_container: bool
    is_surface: bool

    @property
    def color_rgb(self) -> tuple[float, float, float]:
        return PALETTE[self.color]

    @property
    def volume(self) -> float:
        ex, ey, ez = self.extents
        return ex * ey * ez


@dataclass(frozen=True)
class Catalog:
    version: str
    classes: tuple[ObjectClass, ...]
    _by_id: dict[str, ObjectClass] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self):
        index = {cls.class_id: cls for cls in self.classes}
        object.__setattr__(self, "_by_id", index)

    def get(self, class_id: str) -> ObjectClass:
        try:
            return self._by_id[class_id]
        except KeyError:
            raise SchemaError(f"unknown class_id {class_id!r}") from None

    def __contains__(self, class_id: str) -> bool:
        return class_id in self._by_id

    def __iter__(self):
        return iter(self.classes)


_CLASS_FIELDS = {
    "class_id", "category", "shape", "extents", "color",
    "mass", "graspable", "is_container", "is_surface",
}


def _check_class(raw: dict) -> ObjectClass:
    if not isinstance(raw, dict):
        raise ParseError("class record must be an object")
    cid = raw.get("class_id")
    label = cid if isinstance(cid, str) else "<missing class_id>"
    unknown = set(raw) - _CLASS_FIELDS
    if unknown:
        raise SchemaError(f"{label}: unknown fields {sorted(unknown)}")
    missing = _CLASS_FIELDS - set(raw)
    if missing:
        raise SchemaError(f"{label}: missing fields {sorted(missing)}")
    if not isinstance(cid, str) or not cid:
        raise SchemaError(f"{label}: class_id must be a non-empty string")
    try:
        category = Category(raw["category"])
    except ValueError:
        raise SchemaError(f"{label}: bad category {raw['category']!r}") from None
    try:
        shape = Shape(raw["shape"])
    except ValueError:
        raise SchemaError(f"{label}: bad shape {raw['shape']!r}") from None
    extents = raw["extents"]
    if (not isinstance(extents, (list, tuple)) or len(extents) != 3
            or not all(isinstance(v, (int, float)) and v > 0 for v in extents)):
        raise SchemaError(f"{label}: extents must be 3 positive lengths")
    color = raw["color"]
    if color not in PALETTE:
        raise SchemaError(f"{label}: color {color!r} not in palette")
    mass = raw["mass"]
    if not isinstance(mass, (int, float)) or mass <= 0:
        raise SchemaError(f"{label}: mass must be positive")
    for flag in ("graspable", "is_container", "is_surface"):
        if not isinstance(raw[flag], bool):
            raise SchemaError(f"{label}: {flag} must be a boolean")
    if raw["is_container"] and shape is not Shape.OPEN_BOX:
        raise SchemaError(f"{label}: containers must have shape OpenBox")
    if category is Category.STATIC and raw["graspable"]:
        raise SchemaError(f"{label}: static classes cannot be graspable")
    return ObjectClass(
        class_id=cid,
        category=category,
        shape=shape,
        extents=(float(extents[0]), float(extents[1]), float(extents[2])),
        color=color,
        mass=float(mass),
        graspable=raw["graspable"],
        is_container=raw["is_container"],
        is_surface=raw["is_surface"],
    )


def parse_catalog(doc: dict) -> Catalog:
    """Validate an already-decoded catalog document."""
    if not isinstance(doc, dict):
        raise ParseError("catalog document must be an object")
    unknown = set(doc) - {"version", "classes"}
    if unknown:
        raise SchemaError(f"catalog: unknown top-level fields {sorted(unknown)}")
    version = doc.get("version")
    if not isinstance(version, str) or not version:
        raise SchemaError("catalog: version must be a non-empty string")
    raw_classes = doc.get("classes")
    if not isinstance(raw_classes, list):
        raise ParseError("catalog: classes must be a list")
    classes = tuple(_check_class(raw) for raw in raw_classes)
    seen: set[str] = set()
    for cls in classes:
        if cls.class_id in seen:
            raise SchemaError(f"duplicate class_id {cls.class_id!r}")
        seen.add(cls.class_id)
    _check_roles(classes)
    return Catalog(version=version, classes=classes)


def _check_roles(classes: Iterable[ObjectClass]) -> None:
    """Room generation and lessons need these three roles to exist."""
    if not any(c.category is Category.STATIC and c.is_surface for c in classes):
        raise SchemaError("catalog needs at least one static surface class")
    if not any(c.is_container for c in classes):
        raise SchemaError("catalog needs at least one container class")
    if not any(c.category is Category.INTERACTABLE and c.graspable for c in classes):
        raise SchemaError("catalog needs at least one graspable interactable class")


def load_catalog(path: str | Path) -> Catalog:
    """Load and validate a catalog file.

    Raises:
        ParseError: file is not valid JSON or not shaped like a catalog.
        SchemaError: a class violates an invariant (named in the message).
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read catalog: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog is not valid JSON: {exc}") from exc
    return parse_catalog(doc)


def default_catalog() -> Catalog:
    """The bundled desk catalog (24 classes: 6 static, 18 interactable)."""
    source = resources.files("playroom.data").joinpath("catalog.json")
    return parse_catalog(json.loads(source.read_text(encoding="utf-8")))


def sample_class(
    catalog: Catalog, rng: Rng, predicate: Callable[[ObjectClass], bool]
) -> ObjectClass:
    """Uniform draw over classes passing ``predicate``.

    Consumes exactly one rng draw regardless of the filter, so callers can
    count on stable stream positions.

    Raises:
        EmptyFilter: no class matches.
    """
    matches = [cls for cls in catalog.classes if predicate(cls)]
    if not matches:
        raise EmptyFilter("no catalog class matches the predicate")
    return matches[rng.randrange(len(matches))]


def class_counts(catalog: Catalog) -> tuple[int, int]:
    """(static, interactable) class counts; (0, 0) for an empty catalog."""
    static = sum(1 for c in catalog.classes if c.category is Category.STATIC)
    return static, len(catalog.classes) - static


def is_interactable(cls: ObjectClass) -> bool:
    return cls.category is Category.INTERACTABLE


def is_static(cls: ObjectClass) -> bool:
    return cls.category is Category.STATIC
