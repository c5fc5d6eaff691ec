"""Deterministic playroom simulator.

A seeded toy room: procedurally placed furniture and toys, a child and a
parent avatar, a teacher that compiles grounded lessons, graded language,
task generation, ray-cast cameras, and a newline-delimited JSON protocol.
Every stochastic choice flows through named deterministic streams so full
episodes replay bit-for-bit.
"""

__version__ = "0.1.0"

from playroom.catalog import Catalog, ObjectClass, load_catalog
from playroom.world import GridSpec, ObjectInstance, Scene, generate_scene

__all__ = [
    "Catalog",
    "GridSpec",
    "ObjectClass",
    "ObjectInstance",
    "Scene",
    "generate_scene",
    "load_catalog",
    "__version__",
]
