"""Teaching scripts: bind a concept to scene objects, act it out, then speak.

A lesson compiles to a deterministic plan (navigate / grab / guided placement
steps), a postcondition goal, and one utterance at the requested speech level.
The runner executes the motion, verifies the goal, and only then points and
speaks; any failed step or unmet goal interrupts the lesson instead of
narrating something untrue.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Mapping

from playroom.agents import (
    AGENT_IDS,
    AGENT_RADIUS,
    AGENT_RENDER_ID,
    CHILD,
    PARENT,
    ActionCommand,
    MAX_REACH_HEIGHT,
    RELEASE_DROP,
    Simulation,
    Status,
    Verb,
    agent_homes,
    approach_band,
    clear_cells_by_centrality,
    dry_run_placements,
    leg_arrives,
    nav_center,
    nav_component,
    near_release_spot,
)
from playroom.catalog import Catalog
from playroom.errors import (
    BindFailure,
    InsufficientObjects,
    ParseError,
    PlayroomError,
    UnknownScript,
)
from playroom.kinetics import (
    Aabb,
    Relation,
    cavity_aabb,
    eval_predicate,
    rotated_half_extents,
)
from playroom.language import (
    Lexicon,
    SlotValue,
    Utterance,
    bare_noun,
    noun_phrase,
    noun_phrase_group,
    noun_phrase_nocolor,
    realize,
)
from playroom.rng import Rng
from playroom.world import LANE_META, Scene, spawn_object

LEVELS = (0, 1, 2)

# Concepts whose plan moves objects (vs. pure point-and-say teaching).
MOTION_CONCEPTS = (
    "on",
    "in",
    "under",
    "near",
    "put_on",
    "put_in",
    "take_out",
    "give",
    "touch",
    "rotate",
    "only",
    "all",
)


@dataclass(frozen=True)
class ConceptSpec:
    concept_id: str
    kind: str
    plan: str
    templates: dict[str, str]
    relation: str | None = None
    color: str | None = None
    size: str | None = None
    determiner: str | None = None


@dataclass(frozen=True)
class Registry:
    version: str
    lexicon: Lexicon
    concepts: dict[str, ConceptSpec]
    noun_templates: dict[str, str]

    def concept(self, concept_id: str) -> ConceptSpec:
        spec = self.concepts.get(concept_id)
        if spec is not None:
            return spec
        if concept_id in set(self.lexicon.nouns.values()):
            return ConceptSpec(
                concept_id=concept_id,
                kind="noun",
                plan="point_say",
                templates=dict(self.noun_templates),
            )
        raise UnknownScript(f"no concept {concept_id!r}")

    def available_concepts(self, catalog: Catalog) -> list[str]:
        nouns = sorted(
            {self.lexicon.nouns[c.class_id] for c in catalog if c.class_id in self.lexicon.nouns}
        )
        return sorted(self.concepts) + nouns


def parse_registry(doc: dict) -> Registry:
    try:
        lex = doc["lexicon"]
        lexicon = Lexicon(
            nouns=dict(lex["nouns"]),
            irregular_plurals=dict(lex.get("irregular_plurals", {})),
        )
        concepts = {}
        for cid, raw in doc["concepts"].items():
            concepts[cid] = ConceptSpec(
                concept_id=cid,
                kind=raw["kind"],
                plan=raw["plan"],
                templates=dict(raw["templates"]),
                relation=raw.get("relation"),
                color=raw.get("color"),
                size=raw.get("size"),
                determiner=raw.get("determiner"),
            )
        return Registry(
            version=doc["version"],
            lexicon=lexicon,
            concepts=concepts,
            noun_templates=dict(doc["noun_templates"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad lesson registry: {exc}") from exc


@lru_cache(maxsize=1)
def default_registry() -> Registry:
    text = resources.files("playroom.data").joinpath("lessons.json").read_text("utf-8")
    return parse_registry(json.loads(text))


# -- goals -----------------------------------------------------------------


@dataclass(frozen=True)
class RelationGoal:
    relation: Relation
    a: int
    b: int
    negated: bool = False


@dataclass(frozen=True)
class HeldByGoal:
    instance: int
    agent: str


@dataclass(frozen=True)
class EventGoal:
    kind: str
    target: int
    actor: str


@dataclass(frozen=True)
class OnlyInGoal:
    fig: int
    container: int
    others: tuple[int, ...]


@dataclass(frozen=True)
class AllInGoal:
    members: tuple[int, ...]
    container: int


@dataclass(frozen=True)
class TrueGoal:
    pass


Goal = RelationGoal | HeldByGoal | EventGoal | OnlyInGoal | AllInGoal | TrueGoal


def evaluate_goal(sim: Simulation, goal: Goal, since_tick: int = 0) -> bool:
    scene = sim.scene
    if isinstance(goal, TrueGoal):
        return True
    if isinstance(goal, RelationGoal):
        held = scene.instance(goal.a).held_by is not None
        value = (not held) and eval_predicate(scene, goal.relation, goal.a, goal.b)
        return (not value) if goal.negated else value
    if isinstance(goal, HeldByGoal):
        return scene.instance(goal.instance).held_by == goal.agent
    if isinstance(goal, EventGoal):
        return any(
            e.kind == goal.kind
            and e.tick >= since_tick
            and e.payload.get("agent") == goal.actor
            and e.payload.get("target") == goal.target
            for e in scene.events
        )
    if isinstance(goal, OnlyInGoal):
        if not eval_predicate(scene, Relation.IN, goal.fig, goal.container):
            return False
        return not any(
            eval_predicate(scene, Relation.IN, other, goal.container)
            for other in goal.others
        )
    if isinstance(goal, AllInGoal):
        return all(
            eval_predicate(scene, Relation.IN, m, goal.container) for m in goal.members
        )
    raise UnknownScript(f"unknown goal {goal!r}")  # pragma: no cover


def goal_negated_for_task(goal: Goal) -> Goal:
    """Negate a relation goal; used when a task needs a false-at-issue target."""
    if isinstance(goal, RelationGoal):
        return RelationGoal(goal.relation, goal.a, goal.b, negated=not goal.negated)
    raise UnknownScript("only relation goals can be negated")


# -- plan steps --------------------------------------------------------------


@dataclass(frozen=True)
class ActStep:
    agent: str
    command: ActionCommand


@dataclass(frozen=True)
class CueStep:
    actor: str
    op: str
    params: dict = field(default_factory=dict)


Step = ActStep | CueStep


@dataclass
class LessonScript:
    concept: str
    level: int
    actor: str
    bindings: dict[str, int | tuple[int, ...]]
    steps: list[Step]
    utterance: Utterance
    goal: Goal
    point_target: int | None


@dataclass
class LessonOutcome:
    success: bool
    reason: str | None
    utterance: Utterance | None
    script: LessonScript


# -- binding helpers -----------------------------------------------------------


def _definite(scene: Scene, lexicon: Lexicon, instance_id: int) -> bool:
    return noun_phrase(scene, lexicon, instance_id).text.startswith("the ")


def _spoken(spec: ConceptSpec, level: int, slot: str) -> bool:
    """True when the level's template realizes this slot.

    Grounds are named only in full sentences; a lower level has no reference
    to resolve, so binding need not insist on a definite ground there.
    """
    return f"{{{slot}#" in spec.templates[f"l{level}"]


class _Reach:
    """Cached walk-lattice component so binding skips walled-in objects.

    Reachability is judged from the acting avatar's position: an object binds
    only when some lattice cell in the actor's component lies within the
    approach band and the simulated final walk leg arrives.
    """

    def __init__(
        self,
        scene: Scene,
        start: tuple[float, float],
        partner: tuple[float, float] | None = None,
    ):
        self.scene = scene
        self.cells = nav_component(scene, start)
        self.band = approach_band(scene.grid)
        self.partner = partner

    def ok_box(self, box: Aabb) -> bool:
        grid = self.scene.grid
        for ix, iy in self.cells:
            x, y = nav_center(grid, ix, iy)
            dx = max(box.min[0] - x, 0.0, x - box.max[0])
            dy = max(box.min[1] - y, 0.0, y - box.max[1])
            if (dx * dx + dy * dy) ** 0.5 <= self.band and leg_arrives(
                self.scene, (x, y), box
            ):
                return True
        return False

    def ok(self, instance_id: int) -> bool:
        return self.ok_box(self.scene.aabb(instance_id))

    def partner_ok(self) -> bool:
        if self.partner is None:
            return True
        x, y = self.partner
        r = AGENT_RADIUS
        return self.ok_box(Aabb((x - r, y - r, 0.0), (x + r, y + r, 1.0)))


def _free_graspables(scene: Scene, reach: _Reach) -> list[int]:
    return sorted(
        inst.instance_id
        for inst in scene.instances
        if scene.catalog.get(inst.class_id).graspable
        and inst.held_by is None
        and reach.ok(inst.instance_id)
    )


def _fits_on(scene: Scene, fig: int, ground: int) -> bool:
    finst = scene.instance(fig)
    fcls = scene.catalog.get(finst.class_id)
    fx, fy = rotated_half_extents(fcls.extents, finst.yaw)
    gbox = scene.aabb(ground)
    gx = (gbox.max[0] - gbox.min[0]) / 2.0
    gy = (gbox.max[1] - gbox.min[1]) / 2.0
    if fx >= gx or fy >= gy:
        return False
    return gbox.max[2] + RELEASE_DROP <= MAX_REACH_HEIGHT


def _fits_in(scene: Scene, fig: int, ground: int) -> bool:
    ginst = scene.instance(ground)
    gcls = scene.catalog.get(ginst.class_id)
    if not gcls.is_container:
        return False
    finst = scene.instance(fig)
    fcls = scene.catalog.get(finst.class_id)
    fx, fy = rotated_half_extents(fcls.extents, finst.yaw)
    cav = cavity_aabb(ginst, gcls)
    cx = (cav.max[0] - cav.min[0]) / 2.0
    cy = (cav.max[1] - cav.min[1]) / 2.0
    if fx >= cx or fy >= cy:
        return False
    # resting center must sit inside the cavity for containment to hold
    if cav.min[2] + fcls.extents[2] / 2.0 >= cav.max[2]:
        return False
    gbox = scene.aabb(ground)
    return gbox.max[2] + RELEASE_DROP <= MAX_REACH_HEIGHT


def _covers_cavity(scene: Scene, lid: int, ground: int) -> bool:
    ginst = scene.instance(ground)
    gcls = scene.catalog.get(ginst.class_id)
    cav = cavity_aabb(ginst, gcls)
    linst = scene.instance(lid)
    lcls = scene.catalog.get(linst.class_id)
    lx, ly = rotated_half_extents(lcls.extents, linst.yaw)
    cx = (cav.max[0] - cav.min[0]) / 2.0
    cy = (cav.max[1] - cav.min[1]) / 2.0
    gbox = scene.aabb(ground)
    gx = (gbox.max[0] - gbox.min[0]) / 2.0
    gy = (gbox.max[1] - gbox.min[1]) / 2.0
    # wide enough not to fall in, narrow enough to rest centered on the rim
    return lx > cx and ly > cy and lx < gx + 0.2 and ly < gy + 0.2


def _pick(rng: Rng, items: list[int], why: str) -> int:
    if not items:
        raise InsufficientObjects(why)
    return rng.choice(sorted(items))


def _containers_for(
    scene: Scene,
    lexicon: Lexicon,
    reach: _Reach,
    fig: int,
    definite: bool = True,
) -> list[int]:
    return [
        inst.instance_id
        for inst in scene.instances
        if inst.instance_id != fig
        and inst.held_by is None
        and scene.catalog.get(inst.class_id).is_container
        and _fits_in(scene, fig, inst.instance_id)
        and (not definite or _definite(scene, lexicon, inst.instance_id))
        and reach.ok(inst.instance_id)
    ]


def _bind_pair(
    scene: Scene,
    rng: Rng,
    figs: list[int],
    grounds_for: Callable[[int], list[int]],
    why: str,
) -> tuple[int, int]:
    """Draw figure then ground without replacement until the guided placement
    dry-runs clean on the live scene."""
    pool = sorted(figs)
    while pool:
        fig = rng.choice(pool)
        grounds = sorted(grounds_for(fig))
        while grounds:
            ground = rng.choice(grounds)
            if dry_run_placements(scene, [(fig, ground)]):
                return fig, ground
            grounds.remove(ground)
        pool.remove(fig)
    raise InsufficientObjects(why)


# -- the compiler ----------------------------------------------------------------


def compile_lesson(
    scene: Scene,
    concept_id: str,
    level: int,
    rng: Rng,
    actor: str = PARENT,
    registry: Registry | None = None,
    agent_positions: Mapping[str, tuple[float, float]] | None = None,
) -> LessonScript:
    """Bind roles, lay out steps, and realize the utterance for one lesson.

    ``agent_positions`` lets a live session bind from where the avatars stand
    right now; the default assumes both are at their spawn homes.
    """
    if level not in LEVELS:
        raise BindFailure(f"level must be one of {LEVELS}")
    registry = registry or default_registry()
    spec = registry.concept(concept_id)
    lexicon = registry.lexicon
    builder = _PLANS.get(spec.plan)
    if builder is None:
        raise UnknownScript(f"no plan {spec.plan!r}")  # pragma: no cover
    positions = dict(agent_positions) if agent_positions else agent_homes(scene)
    partner = next(a for a in AGENT_IDS if a != actor)
    reach = _Reach(scene, positions[actor], partner=positions.get(partner))
    bindings, steps, goal, slots, point_target = builder(
        scene, spec, rng, actor, lexicon, reach, level
    )
    template = spec.templates[f"l{level}"]
    utterance = realize(template, slots, level=level, concept=concept_id)
    return LessonScript(
        concept=concept_id,
        level=level,
        actor=actor,
        bindings=bindings,
        steps=steps,
        utterance=utterance,
        goal=goal,
        point_target=point_target,
    )


def _nav(agent: str, target: int) -> ActStep:
    return ActStep(agent, ActionCommand(Verb.NAVIGATE_TO, target=target))


def _grab(agent: str, target: int) -> ActStep:
    return ActStep(agent, ActionCommand(Verb.GRAB, target=target))


def _fetch_and_place(actor: str, fig: int, ground: int) -> list[Step]:
    return [
        _nav(actor, fig),
        _grab(actor, fig),
        _nav(actor, ground),
        CueStep(actor, "place_over", {"ground": ground}),
    ]


def _plan_achieve_on(scene, spec, rng, actor, lexicon, reach, level):
    speak_ground = _spoken(spec, level, "ground")

    def grounds_for(fig: int) -> list[int]:
        return [
            inst.instance_id
            for inst in scene.instances
            if inst.instance_id != fig
            and inst.held_by is None
            and scene.catalog.get(inst.class_id).is_surface
            and _fits_on(scene, fig, inst.instance_id)
            and (not speak_ground or _definite(scene, lexicon, inst.instance_id))
            and inst.supported_by is None
            and inst.contained_in is None
            and reach.ok(inst.instance_id)
        ]

    fig, ground = _bind_pair(
        scene, rng, _free_graspables(scene, reach), grounds_for,
        "no surface can take a figure",
    )
    steps = _fetch_and_place(actor, fig, ground)
    goal = RelationGoal(Relation.ON, fig, ground)
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
        "ground#np": noun_phrase(scene, lexicon, ground),
    }
    return {"fig": fig, "ground": ground}, steps, goal, slots, fig


def _plan_achieve_in(scene, spec, rng, actor, lexicon, reach, level):
    speak_ground = _spoken(spec, level, "ground")
    fig, ground = _bind_pair(
        scene, rng, _free_graspables(scene, reach),
        lambda f: _containers_for(scene, lexicon, reach, f, definite=speak_ground),
        "no figure fits any container",
    )
    steps = _fetch_and_place(actor, fig, ground)
    goal = RelationGoal(Relation.IN, fig, ground)
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
        "ground#np": noun_phrase(scene, lexicon, ground),
    }
    return {"fig": fig, "ground": ground}, steps, goal, slots, fig


def _plan_achieve_under(scene, spec, rng, actor, lexicon, reach, level):
    """Hide the figure in an open container, then rest a wide lid on the rim;
    the figure ends up under the lid."""
    speak_lid = _spoken(spec, level, "lid")
    lid_pool = sorted(
        inst.instance_id
        for inst in scene.instances
        if inst.held_by is None
        and scene.catalog.get(inst.class_id).graspable
        and scene.catalog.get(inst.class_id).is_surface
        and reach.ok(inst.instance_id)
    )
    figs = sorted(_free_graspables(scene, reach))
    while figs:
        fig = rng.choice(figs)
        grounds = sorted(
            inst.instance_id
            for inst in scene.instances
            if inst.instance_id != fig
            and inst.held_by is None
            and scene.catalog.get(inst.class_id).is_container
            and _fits_in(scene, fig, inst.instance_id)
            and reach.ok(inst.instance_id)
        )
        while grounds:
            ground = rng.choice(grounds)
            lids = [
                lid for lid in lid_pool
                if lid not in (fig, ground) and _covers_cavity(scene, lid, ground)
            ]
            while lids:
                lid = rng.choice(lids)
                # A spoken lid must resolve: name it uniquely and point at the
                # figure, or name the figure uniquely and point at the lid.
                point = fig
                if speak_lid and not _definite(scene, lexicon, lid):
                    if not _definite(scene, lexicon, fig):
                        lids.remove(lid)
                        continue
                    point = lid
                if dry_run_placements(scene, [(fig, ground), (lid, ground)]):
                    steps = _fetch_and_place(actor, fig, ground)
                    steps += _fetch_and_place(actor, lid, ground)
                    goal = RelationGoal(Relation.UNDER, fig, lid)
                    slots = {
                        "fig#np": noun_phrase(scene, lexicon, fig),
                        "fig#bare": bare_noun(scene, lexicon, fig),
                        "lid#np": noun_phrase(scene, lexicon, lid),
                    }
                    bindings = {"fig": fig, "ground": ground, "lid": lid}
                    return bindings, steps, goal, slots, point
                lids.remove(lid)
            grounds.remove(ground)
        figs.remove(fig)
    raise InsufficientObjects("no figure/container/lid combination")


def _plan_achieve_near(scene, spec, rng, actor, lexicon, reach, level):
    speak_ground = _spoken(spec, level, "ground")
    figs = sorted(_free_graspables(scene, reach))
    fig = ground = None
    while figs and ground is None:
        fig = rng.choice(figs)
        grounds = sorted(
            inst.instance_id
            for inst in scene.instances
            if inst.instance_id != fig
            and inst.held_by is None
            and inst.category.value == "Static"
            and (not speak_ground or _definite(scene, lexicon, inst.instance_id))
            and reach.ok(inst.instance_id)
        )
        while grounds:
            cand = rng.choice(grounds)
            if near_release_spot(scene, fig, cand) is not None:
                ground = cand
                break
            grounds.remove(cand)
        else:
            figs.remove(fig)
    if ground is None:
        raise InsufficientObjects("no landmark to be near")
    steps = [
        _nav(actor, fig),
        _grab(actor, fig),
        _nav(actor, ground),
        CueStep(actor, "release_near", {"ground": ground}),
    ]
    goal = RelationGoal(Relation.NEAR, fig, ground)
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
        "ground#np": noun_phrase(scene, lexicon, ground),
    }
    return {"fig": fig, "ground": ground}, steps, goal, slots, fig


def _plan_take_out(scene, spec, rng, actor, lexicon, reach, level):
    speak_ground = _spoken(spec, level, "ground")
    figs = _free_graspables(scene, reach)
    inside = sorted(
        fig
        for fig in figs
        if scene.instance(fig).contained_in is not None
        and (not speak_ground or _definite(scene, lexicon, scene.instance(fig).contained_in))
    )
    steps: list[Step] = []
    if inside:
        fig = rng.choice(inside)
        ground = scene.instance(fig).contained_in
    else:
        # stage it first: put the figure in, then take it back out
        fig, ground = _bind_pair(
            scene, rng, figs,
            lambda f: _containers_for(scene, lexicon, reach, f, definite=speak_ground),
            "nothing to take out of anything",
        )
        steps += _fetch_and_place(actor, fig, ground)
    steps += [
        _nav(actor, fig),
        _grab(actor, fig),
        CueStep(actor, "release_free", {}),
    ]
    goal = RelationGoal(Relation.IN, fig, ground, negated=True)
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
        "ground#np": noun_phrase(scene, lexicon, ground),
    }
    return {"fig": fig, "ground": ground}, steps, goal, slots, fig


def _plan_give(scene, spec, rng, actor, lexicon, reach, level):
    recipient = CHILD if actor == PARENT else PARENT
    if not reach.partner_ok():
        raise InsufficientObjects("the recipient is walled off")
    figs = _free_graspables(scene, reach)
    fig = _pick(rng, figs, "no graspable figure to give")
    steps = [
        _nav(actor, fig),
        _grab(actor, fig),
        _nav(actor, AGENT_RENDER_ID[recipient]),
        CueStep(actor, "give_to", {"recipient": recipient}),
    ]
    goal = HeldByGoal(fig, recipient)
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
    }
    return {"fig": fig, "recipient": recipient}, steps, goal, slots, fig


def _plan_touch(scene, spec, rng, actor, lexicon, reach, level):
    ids = sorted(
        inst.instance_id
        for inst in scene.instances
        if inst.held_by is None and reach.ok(inst.instance_id)
    )
    fig = _pick(rng, ids, "nothing to touch")
    steps = [_nav(actor, fig), ActStep(actor, ActionCommand(Verb.TOUCH, target=fig))]
    goal = EventGoal("touch", fig, actor)
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
    }
    return {"fig": fig}, steps, goal, slots, fig


def _plan_rotate(scene, spec, rng, actor, lexicon, reach, level):
    figs = _free_graspables(scene, reach)
    fig = _pick(rng, figs, "nothing to rotate")
    steps = [_nav(actor, fig), ActStep(actor, ActionCommand(Verb.ROTATE, target=fig))]
    goal = EventGoal("rotate", fig, actor)
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
    }
    return {"fig": fig}, steps, goal, slots, fig


def _plan_point_say(scene, spec, rng, actor, lexicon, reach, level):
    fig = _bind_point_target(scene, spec, rng, lexicon, reach)
    steps = [_nav(actor, fig)]
    slots = {
        "fig#np": noun_phrase(scene, lexicon, fig),
        "fig#np_nocolor": noun_phrase_nocolor(scene, lexicon, fig),
        "fig#bare": bare_noun(scene, lexicon, fig),
    }
    return {"fig": fig}, steps, TrueGoal(), slots, fig


def _bind_point_target(scene, spec, rng, lexicon, reach) -> int:
    if spec.kind == "noun":
        ids = [
            inst.instance_id
            for inst in scene.instances
            if lexicon.noun_of(inst.class_id) == spec.concept_id
            and reach.ok(inst.instance_id)
        ]
        return _pick(rng, ids, f"no {spec.concept_id} in the scene")
    if spec.kind == "color":
        ids = [
            inst.instance_id
            for inst in scene.instances
            if scene.catalog.get(inst.class_id).color == spec.color
            and reach.ok(inst.instance_id)
        ]
        return _pick(rng, ids, f"nothing {spec.color} in the scene")
    if spec.kind == "size":
        ids = []
        by_noun: dict[str, list[int]] = {}
        for inst in scene.instances:
            by_noun.setdefault(lexicon.noun_of(inst.class_id), []).append(inst.instance_id)
        for members in by_noun.values():
            if len(members) < 2:
                continue
            vols = {
                m: scene.catalog.get(scene.instance(m).class_id).volume for m in members
            }
            ordered = sorted(members, key=lambda m: (vols[m], m))
            lo, hi = ordered[0], ordered[-1]
            if vols[hi] <= vols[lo] * 1.5:
                continue  # too close in size to teach a contrast
            pick_id = hi if spec.size == "big" else lo
            if reach.ok(pick_id):
                ids.append(pick_id)
        return _pick(rng, ids, "no clear size contrast")
    if spec.kind == "determiner":
        ids = []
        for inst in scene.instances:
            det = noun_phrase_nocolor(scene, lexicon, inst.instance_id).text.split()[0]
            if det == spec.determiner and reach.ok(inst.instance_id):
                ids.append(inst.instance_id)
        return _pick(rng, ids, f"no referent takes {spec.determiner!r}")
    raise UnknownScript(f"point_say cannot bind kind {spec.kind!r}")  # pragma: no cover


def _group_options(scene, lexicon, reach) -> list[tuple[str, tuple[int, ...]]]:
    """Noun groups of two-plus where every member can be fetched.

    Spoken quantifiers range over the whole scene, so one held, stuck, or
    ungraspable member vetoes its noun; quantifying over a subset would let
    the teacher narrate something false.
    """
    by_noun: dict[str, list[int]] = {}
    for inst in scene.instances:
        by_noun.setdefault(lexicon.noun_of(inst.class_id), []).append(inst.instance_id)
    out = []
    for noun, ids in sorted(by_noun.items()):
        if len(ids) < 2:
            continue
        if all(
            scene.instance(i).held_by is None
            and scene.catalog.get(scene.instance(i).class_id).graspable
            and reach.ok(i)
            for i in ids
        ):
            out.append((noun, tuple(sorted(ids))))
    return out


def _plan_only_in(scene, spec, rng, actor, lexicon, reach, level):
    speak_ground = _spoken(spec, level, "ground")
    members_of = dict(_group_options(scene, lexicon, reach))
    nouns = sorted(members_of)
    while nouns:
        noun = rng.choice(nouns)
        members = members_of[noun]
        figs = list(members)
        while figs:
            fig = rng.choice(figs)
            others = tuple(m for m in members if m != fig)
            grounds = sorted(
                _containers_for(scene, lexicon, reach, fig, definite=speak_ground)
            )
            while grounds:
                gid = rng.choice(grounds)
                if dry_run_placements(scene, [(fig, gid)]):
                    steps: list[Step] = []
                    # clear the others out first so the cavity has room
                    for other in others:
                        if scene.instance(other).contained_in == gid:
                            steps += [
                                _nav(actor, other),
                                _grab(actor, other),
                                CueStep(actor, "release_free", {}),
                            ]
                    if scene.instance(fig).contained_in != gid:
                        steps += _fetch_and_place(actor, fig, gid)
                    goal = OnlyInGoal(fig, gid, others)
                    slots = {
                        "fig#np": noun_phrase(scene, lexicon, fig),
                        "fig#bare": bare_noun(scene, lexicon, fig),
                        "ground#np": noun_phrase(scene, lexicon, gid),
                    }
                    bindings = {"fig": fig, "ground": gid, "others": others}
                    return bindings, steps, goal, slots, fig
                grounds.remove(gid)
            figs.remove(fig)
        nouns.remove(noun)
    raise InsufficientObjects("no group member fits a container alone")


def _plan_all_in(scene, spec, rng, actor, lexicon, reach, level):
    speak_ground = _spoken(spec, level, "ground")
    members_of = dict(_group_options(scene, lexicon, reach))
    nouns = sorted(members_of)
    while nouns:
        noun = rng.choice(nouns)
        members = members_of[noun]
        grounds = sorted(
            inst.instance_id
            for inst in scene.instances
            if inst.instance_id not in members
            and inst.held_by is None
            and scene.catalog.get(inst.class_id).is_container
            and (not speak_ground or _definite(scene, lexicon, inst.instance_id))
            and reach.ok(inst.instance_id)
            and all(_fits_in(scene, m, inst.instance_id) for m in members)
        )
        while grounds:
            gid = rng.choice(grounds)
            todo = [(m, gid) for m in members if scene.instance(m).contained_in != gid]
            if dry_run_placements(scene, todo):
                steps: list[Step] = []
                for member, _ in todo:
                    steps += _fetch_and_place(actor, member, gid)
                goal = AllInGoal(members, gid)
                slots = {
                    "group#np_group": noun_phrase_group(scene, lexicon, noun),
                    "ground#np": noun_phrase(scene, lexicon, gid),
                }
                bindings = {"group": members, "ground": gid, "noun": noun}
                return bindings, steps, goal, slots, members[0]
            grounds.remove(gid)
        nouns.remove(noun)
    raise InsufficientObjects("no noun group fits a container together")


_PLANS: dict[str, Callable] = {
    "achieve_on": _plan_achieve_on,
    "achieve_in": _plan_achieve_in,
    "achieve_under": _plan_achieve_under,
    "achieve_near": _plan_achieve_near,
    "take_out": _plan_take_out,
    "give": _plan_give,
    "touch_plan": _plan_touch,
    "rotate_plan": _plan_rotate,
    "point_say": _plan_point_say,
    "only_in": _plan_only_in,
    "all_in": _plan_all_in,
}


# -- the runner -------------------------------------------------------------------


def run_lesson(
    sim: Simulation,
    script: LessonScript,
    on_step: Callable[[Simulation, int], None] | None = None,
) -> LessonOutcome:
    """Execute the motion, verify the goal, then point and speak.

    ``on_step`` runs after each completed step; tests use it to perturb the
    scene and check that the teacher notices (and stays silent).
    """
    scene = sim.scene
    start_tick = scene.tick
    scene.emit(
        "lesson_start",
        {
            "concept": script.concept,
            "level": script.level,
            "actor": script.actor,
            "bindings": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in script.bindings.items()},
        },
        lane=LANE_META,
    )

    def interrupt(reason: str) -> LessonOutcome:
        scene.emit(
            "lesson_end", {"success": False, "reason": reason}, lane=LANE_META
        )
        return LessonOutcome(success=False, reason=reason, utterance=None, script=script)

    for idx, step in enumerate(script.steps):
        try:
            if isinstance(step, ActStep):
                result = sim.act(step.agent, step.command)
                if result.status is not Status.SUCCEEDED:
                    return interrupt(result.reason or "StepFailed")
            else:
                sim.apply_cue(step.actor, step.op, **step.params)
        except PlayroomError as exc:
            return interrupt(exc.code)
        if on_step is not None:
            on_step(sim, idx)
    if not evaluate_goal(sim, script.goal, since_tick=start_tick):
        return interrupt("PostconditionFailed")
    sim.step_idle(1)
    if script.point_target is not None and scene.has_instance(script.point_target):
        sim.apply_cue(script.actor, "point_at", target=script.point_target)
    sim.apply_cue(script.actor, "say", utterance=script.utterance.to_doc())
    scene.emit("lesson_end", {"success": True, "reason": None}, lane=LANE_META)
    return LessonOutcome(success=True, reason=None, utterance=script.utterance, script=script)


# -- scene preparation ---------------------------------------------------------


_COLOR_CLASS = {
    "red": "ball_red",
    "green": "ball_green",
    "blue": "ball_blue",
    "yellow": "block_yellow",
    "purple": "cup_purple",
    "orange": "cup_orange",
    "black": "toy_car_black",
    "white": "toy_car_white",
    "brown": "teddy_bear",
    "gray": "book_gray",
    "pink": "box_pink",
    "cyan": "ring_cyan",
}

_CONCEPT_CLASSES = {
    "on": ["ball_red"],
    "in": ["ball_red"],
    "under": ["ball_red", "box_yellow", "box_lid"],
    "near": ["ball_red"],
    "put_on": ["cup_purple"],
    "put_in": ["ball_red"],
    "take_out": ["ball_red"],
    "give": ["ball_red"],
    "touch": [],
    "rotate": ["toy_car_black"],
    "only": ["ball_red", "ball_green"],
    "all": ["ball_red", "ball_green"],
    "a": ["ball_red", "ball_green"],
    "the": [],
    "big": ["ball_blue", "ball_red"],
    "small": ["ball_blue", "ball_red"],
}


def ensure_concept_objects(scene: Scene, concept_id: str, registry: Registry | None = None) -> None:
    """Spawn the classes a concept needs when the sampled scene lacks them.

    Spawns try avatar-clear cells innermost first, so preparation is as
    deterministic as the scene itself and new props stay easy to walk to.
    """
    registry = registry or default_registry()
    spec = registry.concept(concept_id)
    if spec.kind == "noun":
        needed = [registry.lexicon.classes_of(concept_id)[0]]
    elif spec.kind == "color":
        needed = [_COLOR_CLASS[spec.color]]
    else:
        needed = _CONCEPT_CLASSES.get(concept_id, [])
    # Pointed-at figures tolerate duplicates (the gesture disambiguates), so
    # a walled-in sole instance earns a reachable copy; every other concept
    # keeps the single-copy rule that noun definiteness depends on.
    pointable = spec.kind in ("noun", "color")
    reach = _Reach(scene, agent_homes(scene)[PARENT]) if pointable else None
    for class_id in needed:
        present = [inst for inst in scene.instances if inst.class_id == class_id]
        if present and (not pointable or any(reach.ok(i.instance_id) for i in present)):
            continue
        cls = scene.catalog.get(class_id)
        for cell in clear_cells_by_centrality(scene):
            try:
                spawn_object(scene, cls, cell)
            except PlayroomError:
                continue
            break
