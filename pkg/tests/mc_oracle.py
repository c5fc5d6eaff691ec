"""Sampling-based spatial predicate oracle.

Independent of the analytic evaluator: every geometric quantity (bounds,
centers, footprint radii) is estimated from points sampled uniformly inside
each object's actual shape volume, and the set-level relation definitions
are applied to those estimates directly.

Sampled extrema sit within O(extent / n) of the true bounds, so every
comparison carries a guard band. A verdict is only produced when the
statistic clears its threshold by more than the band; anything inside the
band is re-sampled at 100x density, and a pair that stays ambiguous raises
instead of guessing. The oracle therefore never silently disagrees over a
knife-edge; it either decides with margin or fails loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Constants restated from the relation definitions (not imported from the
# implementation under test; duplication here is the point).
CONTACT_EPS = 1e-3
NEAR_FACTOR = 1.5
WALL_FRACTION = 0.1

RELATIONS = ("on", "in", "under", "near", "touching")

_BASE_SAMPLES = 10_000
_REFINE_FACTOR = 20


class KnifeEdge(AssertionError):
    """A statistic stayed within sampling tolerance of its threshold."""


@dataclass
class _Body:
    """Per-instance sampled geometry."""

    lo: np.ndarray  # (3,) estimated min corner
    hi: np.ndarray  # (3,) estimated max corner
    band: float  # one-sided bound error allowance

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    @property
    def footprint_radius(self) -> float:
        return math.hypot(self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]) / 2.0


def _local_points(cls, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points inside the class shape, base at z=0, centered in xy."""
    ex, ey, ez = cls.extents
    shape = cls.shape.value if hasattr(cls.shape, "value") else str(cls.shape)
    if shape == "Box":
        u = rng.random((n, 3))
        return (u - (0.5, 0.5, 0.0)) * (ex, ey, ez)
    if shape == "Sphere":
        # Rejection from the bounding cube keeps the density exactly uniform.
        radius = ex / 2.0
        pts = np.empty((0, 3))
        while len(pts) < n:
            cand = (rng.random((2 * n, 3)) - 0.5) * ex
            keep = (cand * cand).sum(axis=1) <= radius * radius
            pts = np.concatenate([pts, cand[keep]])
        pts = pts[:n].copy()
        pts[:, 2] += radius
        return pts
    if shape == "Cylinder":
        radius = ex / 2.0
        r = radius * np.sqrt(rng.random(n))
        theta = rng.random(n) * 2.0 * math.pi
        return np.column_stack([r * np.cos(theta), r * np.sin(theta), rng.random(n) * ez])
    if shape == "OpenBox":
        # Material only: floor slab plus four wall slabs, drawn by volume.
        wx, wy, wz = ex * WALL_FRACTION, ey * WALL_FRACTION, ez * WALL_FRACTION
        slabs = [
            ((-ex / 2, -ey / 2, 0.0), (ex / 2, ey / 2, wz)),  # floor
            ((-ex / 2, -ey / 2, wz), (-ex / 2 + wx, ey / 2, ez)),  # x- wall
            ((ex / 2 - wx, -ey / 2, wz), (ex / 2, ey / 2, ez)),  # x+ wall
            ((-ex / 2 + wx, -ey / 2, wz), (ex / 2 - wx, -ey / 2 + wy, ez)),  # y- wall
            ((-ex / 2 + wx, ey / 2 - wy, wz), (ex / 2 - wx, ey / 2, ez)),  # y+ wall
        ]
        lows = np.array([s[0] for s in slabs])
        highs = np.array([s[1] for s in slabs])
        volumes = np.prod(highs - lows, axis=1)
        pick = rng.choice(len(slabs), size=n, p=volumes / volumes.sum())
        u = rng.random((n, 3))
        return lows[pick] + u * (highs[pick] - lows[pick])
    raise ValueError(f"unknown shape {shape!r}")


def _sample_body(scene, instance_id: int, n: int, rng: np.random.Generator) -> _Body:
    inst = scene.instance(instance_id)
    cls = scene.catalog.get(inst.class_id)
    pts = _local_points(cls, n, rng)
    c, s = math.cos(inst.yaw), math.sin(inst.yaw)
    world = np.empty_like(pts)
    world[:, 0] = inst.position[0] + pts[:, 0] * c - pts[:, 1] * s
    world[:, 1] = inst.position[1] + pts[:, 0] * s + pts[:, 1] * c
    world[:, 2] = inst.position[2] + pts[:, 2]
    lo = world.min(axis=0)
    hi = world.max(axis=0)
    # Correct the inward bias of sampled extrema (uniform order statistics):
    # E[min] sits extent/(n+1) inside the true bound.
    span = hi - lo
    correction = span / (n - 1)
    lo = lo - correction
    hi = hi + correction
    band = float(span.max()) * 8.0 / n + 1e-12
    return _Body(lo=lo, hi=hi, band=band)


def _cavity(scene, instance_id: int, body: _Body) -> tuple[np.ndarray, np.ndarray]:
    """Container interior from the sampled outer bounds and the wall rule."""
    inst = scene.instance(instance_id)
    cls = scene.catalog.get(inst.class_id)
    ex, ey, ez = cls.extents
    if inst.yaw_quarter_turns % 2 == 1:
        ex, ey = ey, ex
    wx, wy, wz = (
        cls.extents[0] * WALL_FRACTION,
        cls.extents[1] * WALL_FRACTION,
        cls.extents[2] * WALL_FRACTION,
    )
    if inst.yaw_quarter_turns % 2 == 1:
        wx, wy = wy, wx
    lo = np.array([body.lo[0] + wx, body.lo[1] + wy, body.lo[2] + wz])
    hi = np.array([body.hi[0] - wx, body.hi[1] - wy, body.hi[2]])
    return lo, hi


def _decide(margin: float, band: float) -> bool | None:
    """True/False when clear of the band, None when too close to call."""
    if margin > band:
        return True
    if margin < -band:
        return False
    return None


def _gap(lo_a, hi_a, lo_b, hi_b) -> float:
    """Euclidean gap between two boxes (0 when overlapping)."""
    g = np.maximum(np.maximum(lo_a - hi_b, lo_b - hi_a), 0.0)
    return float(np.sqrt((g * g).sum()))


def _verdict(scene, relation: str, a: int, b: int, bodies: dict[int, _Body]) -> bool | None:
    body_a, body_b = bodies[a], bodies[b]
    band = body_a.band + body_b.band
    inst_a = scene.instance(a)
    cls_b = scene.catalog.get(scene.instance(b).class_id)

    if relation == "on":
        if inst_a.supported_by != b:
            return False
        z = _decide(CONTACT_EPS - abs(body_a.lo[2] - body_b.hi[2]), band)
        cx, cy = body_a.center[0], body_a.center[1]
        inside = _decide(
            min(cx - body_b.lo[0], body_b.hi[0] - cx, cy - body_b.lo[1], body_b.hi[1] - cy),
            band,
        )
        if z is None or inside is None:
            return None
        return z and inside
    if relation == "in":
        if not cls_b.is_container:
            return False
        lo, hi = _cavity(scene, b, body_b)
        c = body_a.center
        inside = _decide(float(np.minimum(c - lo, hi - c).min()), band)
        return inside
    if relation == "under":
        zt = _decide((body_b.lo[2] + CONTACT_EPS) - body_a.hi[2], band)
        overlap = _decide(
            min(
                body_a.hi[0] - body_b.lo[0],
                body_b.hi[0] - body_a.lo[0],
                body_a.hi[1] - body_b.lo[1],
                body_b.hi[1] - body_a.lo[1],
            ),
            band,
        )
        if zt is None or overlap is None:
            return None
        return zt and overlap
    if relation == "near":
        dist = float(np.linalg.norm(body_a.center - body_b.center))
        limit = NEAR_FACTOR * (body_a.footprint_radius + body_b.footprint_radius)
        return _decide(limit - dist, band * (1.0 + NEAR_FACTOR))
    if relation == "touching":
        return _decide(CONTACT_EPS - _gap(body_a.lo, body_a.hi, body_b.lo, body_b.hi), band)
    raise ValueError(f"unknown relation {relation!r}")


def oracle_eval(
    scene,
    relation: str,
    a: int,
    b: int,
    n_samples: int = _BASE_SAMPLES,
    seed: int = 0,
) -> bool:
    """Sampled truth value for one relation; raises KnifeEdge if undecidable."""
    attempts = (n_samples, n_samples * _REFINE_FACTOR, n_samples * _REFINE_FACTOR**2)
    for attempt, n in enumerate(attempts):
        rng = np.random.default_rng((seed, a, b, attempt))
        bodies = {i: _sample_body(scene, i, n, rng) for i in (a, b)}
        verdict = _verdict(scene, relation, a, b, bodies)
        if verdict is not None:
            return verdict
    raise KnifeEdge(
        f"{relation}({a},{b}) sits within sampling tolerance of its threshold"
    )


def oracle_scene_verdicts(
    scene, n_samples: int = _BASE_SAMPLES, seed: int = 0
) -> dict[tuple[str, int, int], bool]:
    """All five relations over all ordered instance pairs of one scene."""
    ids = [inst.instance_id for inst in scene.instances]
    rng = np.random.default_rng((seed, scene.seed))
    bodies = {i: _sample_body(scene, i, n_samples, rng) for i in ids}
    out: dict[tuple[str, int, int], bool] = {}
    for a in ids:
        for b in ids:
            if a == b:
                continue
            for relation in RELATIONS:
                verdict = _verdict(scene, relation, a, b, bodies)
                if verdict is None:
                    verdict = oracle_eval(scene, relation, a, b, n_samples, seed)
                out[(relation, a, b)] = verdict
    return out
