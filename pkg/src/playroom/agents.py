"""Embodied child and parent avatars and their tick-based actions.

Both avatars share one closed verb set; the parent additionally supports
teacher-only cues (pointing, speech, guided placement) that lessons apply
through :class:`Simulation`.  A tick is 1/20 s.  All per-tick mutations are
pure functions of (scene state, command stream), which is what makes
episode replay exact.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from playroom.errors import (
    BadCommand,
    Busy,
    HandEmpty,
    HandFull,
    NotInteractable,
    OutOfReach,
    PlacementExhausted,
    UnknownTarget,
)
from playroom.catalog import Shape
from playroom.kinetics import (
    Aabb,
    aabb_of,
    cavity_aabb,
    contacts,
    horizontal_gap,
    rotated_half_extents,
    settle,
)
from playroom.rng import Rng
from playroom.world import (
    LANE_CHILD,
    LANE_PARENT,
    LANE_WORLD,
    GridSpec,
    Scene,
    in_bounds,
    separation_violations,
)

TICKS_PER_SECOND = 20
TICK_DT = 1.0 / TICKS_PER_SECOND
WALK_SPEED = 1.0
RUN_SPEED = 2.0
CRAWL_SPEED = 0.4
TURN_RATE = math.pi  # rad/s (180 deg/s)
REACH = 1.0
MAX_REACH_HEIGHT = 1.5
HAND_FORWARD = 0.4
HAND_HEIGHT_STANDING = 0.8
HAND_HEIGHT_CRAWLING = 0.3
EYE_HEIGHT_STANDING = 1.4
EYE_HEIGHT_CRAWLING = 0.5
ARRIVAL_TOLERANCE = 0.1
AGENT_RADIUS = 0.25
LOOKAROUND_TICKS = 40
ROTATE_STEP = math.pi / 2.0
# How close (to the footprint) navigation approaches an instance target.
APPROACH_DISTANCE = 0.8
# Walk lattice refinement: A* cells per scene grid cell along each axis, so
# paths can thread gaps narrower than a full cell.
NAV_DIVISIONS = 2
# Minimum gap kept between siblings placed on the same surface or cavity.
SIBLING_GAP = 0.25
# Released objects start half a unit above the receiving surface.
RELEASE_DROP = 0.5

CHILD = "child"
PARENT = "parent"
AGENT_IDS = (CHILD, PARENT)
# Reserved instance-id aliases so protocol targets can name the avatars.
AGENT_RENDER_ID = {CHILD: 2, PARENT: 3}
RENDER_ID_AGENT = {v: k for k, v in AGENT_RENDER_ID.items()}


class Verb(str, Enum):
    # navigation
    NAVIGATE_TO = "NavigateTo"
    RUN = "Run"
    CRAWL = "Crawl"
    WALK_FORWARD = "WalkForward"
    WALK_BACKWARDS = "WalkBackwards"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    WANDER = "Wander"
    # interaction
    GRAB = "Grab"
    LOOK_AT = "LookAt"
    PUT_BACK = "PutBack"
    LOOK_AROUND = "LookAround"
    TOUCH = "Touch"
    ROTATE = "Rotate"


NAVIGATION_VERBS = frozenset(
    {
        Verb.NAVIGATE_TO,
        Verb.RUN,
        Verb.CRAWL,
        Verb.WALK_FORWARD,
        Verb.WALK_BACKWARDS,
        Verb.TURN_LEFT,
        Verb.TURN_RIGHT,
        Verb.WANDER,
    }
)
INTERACTION_VERBS = frozenset(
    {Verb.GRAB, Verb.LOOK_AT, Verb.PUT_BACK, Verb.LOOK_AROUND, Verb.TOUCH, Verb.ROTATE}
)

# The avatar vocabulary is a closed contract: exactly these 8 + 6 verbs.
assert len(NAVIGATION_VERBS) == 8 and len(INTERACTION_VERBS) == 6
assert NAVIGATION_VERBS | INTERACTION_VERBS == frozenset(Verb)

_TARGET_REQUIRED = frozenset(
    {Verb.NAVIGATE_TO, Verb.GRAB, Verb.LOOK_AT, Verb.TOUCH, Verb.ROTATE}
)
_DURATION_ALLOWED = frozenset(
    {Verb.RUN, Verb.CRAWL, Verb.WALK_FORWARD, Verb.WALK_BACKWARDS}
)


class Posture(str, Enum):
    STANDING = "standing"
    CRAWLING = "crawling"


class Status(str, Enum):
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    INTERRUPTED = "Interrupted"


@dataclass(frozen=True)
class ActionCommand:
    """One avatar instruction; target is an instance id or a 2D point."""

    verb: Verb
    target: int | tuple[float, float] | None = None
    duration_ticks: int | None = None

    def __post_init__(self):
        verb = Verb(self.verb)
        object.__setattr__(self, "verb", verb)
        if verb in _TARGET_REQUIRED and self.target is None:
            raise BadCommand(f"{verb.value} requires a target")
        if verb not in _TARGET_REQUIRED and self.target is not None:
            raise BadCommand(f"{verb.value} does not take a target")
        if self.duration_ticks is not None:
            if verb not in _DURATION_ALLOWED:
                raise BadCommand(f"{verb.value} does not take a duration")
            if not isinstance(self.duration_ticks, int) or self.duration_ticks <= 0:
                raise BadCommand("duration_ticks must be a positive integer")
        if isinstance(self.target, list):
            object.__setattr__(self, "target", tuple(self.target))

    def to_doc(self) -> dict:
        target: int | list[float] | None
        if isinstance(self.target, tuple):
            target = [float(self.target[0]), float(self.target[1])]
        else:
            target = self.target
        return {"verb": self.verb.value, "target": target, "duration_ticks": self.duration_ticks}

    @staticmethod
    def from_doc(doc: dict) -> "ActionCommand":
        target = doc.get("target")
        if isinstance(target, list):
            target = (float(target[0]), float(target[1]))
        return ActionCommand(
            verb=Verb(doc["verb"]), target=target, duration_ticks=doc.get("duration_ticks")
        )


@dataclass
class ActionResult:
    status: Status
    reason: str | None = None
    ticks_elapsed: int = 0

    def to_doc(self) -> dict:
        return {
            "status": self.status.value,
            "reason": self.reason,
            "ticks_elapsed": self.ticks_elapsed,
        }


@dataclass
class AgentState:
    agent_id: str
    position: tuple[float, float]
    heading: float = 0.0
    posture: Posture = Posture.STANDING
    held: int | None = None
    gaze: int | None = None
    pointing_at: int | None = None

    @property
    def hand_height(self) -> float:
        return (
            HAND_HEIGHT_CRAWLING
            if self.posture is Posture.CRAWLING
            else HAND_HEIGHT_STANDING
        )

    @property
    def eye_height(self) -> float:
        return (
            EYE_HEIGHT_CRAWLING if self.posture is Posture.CRAWLING else EYE_HEIGHT_STANDING
        )

    @property
    def speed(self) -> float:
        return CRAWL_SPEED if self.posture is Posture.CRAWLING else WALK_SPEED

    def hand_point(self) -> tuple[float, float, float]:
        return (
            self.position[0] + HAND_FORWARD * math.cos(self.heading),
            self.position[1] + HAND_FORWARD * math.sin(self.heading),
            self.hand_height,
        )

    def to_doc(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "position": [self.position[0], self.position[1]],
            "heading": self.heading,
            "posture": self.posture.value,
            "held": self.held,
            "gaze": self.gaze,
            "pointing_at": self.pointing_at,
        }


def normalize_angle(angle: float) -> float:
    out = math.fmod(angle, 2.0 * math.pi)
    return out + 2.0 * math.pi if out < 0.0 else out


@dataclass
class _Active:
    cmd: ActionCommand
    started_tick: int
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    stop_near: int | None = None  # instance/agent id to approach instead of a point
    ticks_left: int = 0
    heading_target: float | None = None
    fail: str | None = None  # resolved at begin time, reported on first tick
    seen: set[int] = field(default_factory=set)
    sweep_left: int = 0


class Simulation:
    """Owns the agents, executes actions tick by tick, and logs events."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.agents: dict[str, AgentState] = {}
        self._active: dict[str, _Active | None] = {CHILD: None, PARENT: None}
        self._wander_rng: dict[str, Rng] = {
            aid: Rng(scene.seed).derive(f"wander/{aid}") for aid in AGENT_IDS
        }
        self._last_contacts = contacts(scene)
        self._settled_dirty = False
        # Called after every tick; episode recorders hang per-tick hashes here.
        self.tick_hooks: list[Callable[[], None]] = []
        self._place_agents()

    # -- setup ---------------------------------------------------------------

    def _place_agents(self) -> None:
        homes = agent_homes(self.scene)
        for agent_id in AGENT_IDS:
            self.agents[agent_id] = AgentState(agent_id, homes[agent_id])

    # -- geometry helpers ----------------------------------------------------

    def _cell_clear(self, ix: int, iy: int) -> bool:
        x, y = self.scene.grid.cell_center(ix, iy)
        return self._position_clear(x, y)

    def _position_clear(self, x: float, y: float, ignore: set[int] | None = None) -> bool:
        return position_clear(self.scene, x, y, ignore=ignore)

    def _footprint_distance(self, agent: AgentState, box: Aabb) -> float:
        return _point_rect_distance(agent.position[0], agent.position[1], box)

    def _within_reach(self, agent: AgentState, instance_id: int) -> bool:
        box = self.scene.aabb(instance_id)
        if self._footprint_distance(agent, box) > REACH:
            return False
        return box.min[2] <= MAX_REACH_HEIGHT

    # -- command intake --------------------------------------------------------

    def begin_action(self, agent_id: str, cmd: ActionCommand) -> None:
        """Validate preconditions and schedule the action.

        Raises Busy, UnknownTarget, HandFull, HandEmpty, NotInteractable,
        OutOfReach, or BadCommand; a scheduling error leaves state untouched.
        """
        agent = self.agents[agent_id]
        if self._active[agent_id] is not None:
            raise Busy(f"{agent_id} is already acting")
        verb = cmd.verb
        if verb in (Verb.GRAB, Verb.TOUCH, Verb.ROTATE, Verb.LOOK_AT, Verb.NAVIGATE_TO):
            self._check_target(agent, verb, cmd.target)
        if verb is Verb.PUT_BACK and agent.held is None:
            raise HandEmpty(f"{agent_id} is not holding anything")
        active = _Active(cmd=cmd, started_tick=self.scene.tick)
        if verb in (Verb.WALK_FORWARD, Verb.WALK_BACKWARDS, Verb.RUN, Verb.CRAWL):
            active.ticks_left = cmd.duration_ticks or TICKS_PER_SECOND
        elif verb in (Verb.TURN_LEFT, Verb.TURN_RIGHT):
            active.ticks_left = int(round((ROTATE_STEP / TURN_RATE) / TICK_DT))
            sign = 1.0 if verb is Verb.TURN_LEFT else -1.0
            active.heading_target = normalize_angle(agent.heading + sign * ROTATE_STEP)
        elif verb is Verb.LOOK_AROUND:
            active.sweep_left = LOOKAROUND_TICKS
        elif verb is Verb.NAVIGATE_TO:
            self._plan_navigation(agent, active, cmd.target)
        elif verb is Verb.WANDER:
            waypoint = self.wander_step(agent_id)
            if waypoint is None:
                active.fail = "Unreachable"
            else:
                self._plan_navigation(agent, active, waypoint)
        self._active[agent_id] = active
        self.scene.emit(
            "command",
            {"agent": agent_id, "command": cmd.to_doc()},
            lane=_lane(agent_id),
        )

    def _check_target(self, agent: AgentState, verb: Verb, target) -> None:
        if isinstance(target, tuple):
            if verb is not Verb.NAVIGATE_TO:
                raise BadCommand(f"{verb.value} needs an instance target")
            return
        if target in RENDER_ID_AGENT:
            if verb in (Verb.GRAB, Verb.ROTATE):
                raise NotInteractable("avatars cannot be grabbed or rotated")
            return
        if not self.scene.has_instance(target):
            raise UnknownTarget(f"no instance {target}")
        if verb is Verb.GRAB:
            if agent.held is not None:
                raise HandFull(f"{agent.agent_id} already holds {agent.held}")
            inst = self.scene.instance(target)
            cls = self.scene.catalog.get(inst.class_id)
            if not cls.graspable:
                raise NotInteractable(f"{cls.class_id} is not graspable")
            if inst.held_by is not None:
                raise NotInteractable(f"{target} is already held")
            if not self._within_reach(agent, target):
                raise OutOfReach(f"{target} is beyond reach {REACH}")
        elif verb in (Verb.TOUCH, Verb.ROTATE):
            inst = self.scene.instance(target)
            held_by_self = inst.held_by == agent.agent_id
            if inst.held_by is not None and not held_by_self:
                raise NotInteractable(f"{target} is held by someone else")
            if not held_by_self and not self._within_reach(agent, target):
                raise OutOfReach(f"{target} is beyond reach {REACH}")

    # -- navigation -------------------------------------------------------------

    def occupancy(self) -> list[list[bool]]:
        """blocked[iy][ix]: an avatar center cannot stand at this cell center."""
        grid = self.scene.grid
        return [
            [not self._cell_clear(ix, iy) for ix in range(grid.width_cells)]
            for iy in range(grid.depth_cells)
        ]

    def _astar(
        self,
        starts: list[tuple[int, int]],
        goals: set[tuple[int, int]],
        blocked: list[list[bool]],
        edge_ok: "Callable[[tuple[int, int], tuple[int, int]], bool]",
    ) -> list[tuple[int, int]] | None:
        """4-connected A* on the walk lattice; ties resolve by (f, cell index)."""
        if not goals or not starts:
            return None
        grid = self.scene.grid
        nx, ny = nav_dims(grid)

        def h(cell: tuple[int, int]) -> int:
            return min(abs(cell[0] - g[0]) + abs(cell[1] - g[1]) for g in goals)

        frontier: list[tuple[int, int, tuple[int, int]]] = []
        came: dict[tuple[int, int], tuple[int, int] | None] = {}
        cost: dict[tuple[int, int], int] = {}
        for start in starts:
            came[start] = None
            cost[start] = 0
            heapq.heappush(frontier, (h(start), nav_index(grid, *start), start))
        while frontier:
            _, _, current = heapq.heappop(frontier)
            if current in goals:
                path = [current]
                while came[path[-1]] is not None:
                    path.append(came[path[-1]])
                return list(reversed(path))
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nxt = (current[0] + dx, current[1] + dy)
                if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny) or blocked[nxt[1]][nxt[0]]:
                    continue
                if not edge_ok(current, nxt):
                    continue
                ncost = cost[current] + 1
                if nxt not in cost or ncost < cost[nxt]:
                    cost[nxt] = ncost
                    came[nxt] = current
                    heapq.heappush(frontier, (ncost + h(nxt), nav_index(grid, *nxt), nxt))
        return None

    def _plan_navigation(self, agent: AgentState, active: _Active, target) -> None:
        grid = self.scene.grid
        blocked = nav_blocked(self.scene)
        nx, ny = nav_dims(grid)
        ignore = {agent.held} if agent.held is not None else None

        edge_cache: dict[tuple[tuple[int, int], tuple[int, int]], bool] = {}

        def edge_ok(a: tuple[int, int], b: tuple[int, int]) -> bool:
            key = (a, b) if a <= b else (b, a)
            hit = edge_cache.get(key)
            if hit is None:
                hit = edge_cache[key] = segment_walkable(
                    self.scene, nav_center(grid, *key[0]), nav_center(grid, *key[1]), ignore=ignore
                )
            return hit

        entries = entry_cells(self.scene, agent.position, blocked, ignore)
        if not entries:
            active.fail = "Unreachable"
            return
        entry_by_cell = dict(entries)
        starts = [cell for cell, _ in entries]
        if isinstance(target, tuple):
            goal = nav_cell_of(grid, *target)
            if not (0 <= goal[0] < nx and 0 <= goal[1] < ny) or blocked[goal[1]][goal[0]]:
                active.fail = "Unreachable"
                return
            path = self._astar(starts, {goal}, blocked, edge_ok)
            if path is None or not walk_clear(
                self.scene, nav_center(grid, *path[-1]), target, ignore=ignore
            ):
                active.fail = "Unreachable"
                return
            active.waypoints = (
                entry_by_cell[path[0]] + [nav_center(grid, *c) for c in path[1:]] + [target]
            )
            return
        # instance or avatar target: stop once the footprint is in easy reach
        box = self._target_box(target)
        if box is None:
            active.fail = "Unreachable"
            return
        if self._instance_arrived(agent, target):
            active.stop_near = target
            return
        # Goal cells form a band around the footprint wide enough that lattice
        # granularity cannot miss small objects; a final straight leg closes
        # the remaining gap and the per-tick arrival check stops the walk.
        # Each candidate is vetted by simulating that leg, so the walk never
        # commits to a side of a large object it cannot reach across.
        band = approach_band(grid)
        goals = set()
        for iy in range(ny):
            for ix in range(nx):
                if blocked[iy][ix]:
                    continue
                x, y = nav_center(grid, ix, iy)
                if _point_rect_distance(x, y, box) <= band and leg_arrives(
                    self.scene, (x, y), box, ignore=ignore
                ):
                    goals.add((ix, iy))
        path = self._astar(starts, goals, blocked, edge_ok) if goals else None
        if path is None:
            active.fail = "Unreachable"
            return
        active.waypoints = entry_by_cell[path[0]] + [nav_center(grid, *c) for c in path[1:]]
        active.waypoints.append(box.footprint_center)
        active.stop_near = target

    def _target_box(self, target: int) -> Aabb | None:
        if target in RENDER_ID_AGENT:
            other = self.agents[RENDER_ID_AGENT[target]]
            x, y = other.position
            r = AGENT_RADIUS
            return Aabb((x - r, y - r, 0.0), (x + r, y + r, 1.0))
        if not self.scene.has_instance(target):
            return None
        return self.scene.aabb(target)

    def _instance_arrived(self, agent: AgentState, target: int) -> bool:
        box = self._target_box(target)
        if box is None:
            return False
        return self._footprint_distance(agent, box) <= APPROACH_DISTANCE

    def wander_step(self, agent_id: str) -> tuple[float, float] | None:
        """Pick the next roam waypoint: uniform over cells reachable right now."""
        agent = self.agents[agent_id]
        ignore = {agent.held} if agent.held is not None else None
        reachable = sorted(nav_component(self.scene, agent.position, ignore=ignore))
        rng = self._wander_rng[agent_id]
        if not reachable:
            return None
        cell = reachable[rng.randrange(len(reachable))]
        return nav_center(self.scene.grid, *cell)

    # -- ticking ------------------------------------------------------------------

    def tick(self) -> dict[str, ActionResult]:
        """Advance one tick: child resolves first, then parent, world last."""
        results: dict[str, ActionResult] = {}
        for agent_id in AGENT_IDS:
            active = self._active[agent_id]
            if active is None:
                continue
            result = self._step(agent_id, active)
            if result is not None:
                result.ticks_elapsed = self.scene.tick - active.started_tick + 1
                self._active[agent_id] = None
                results[agent_id] = result
        self._flush_world()
        self.scene.tick += 1
        for hook in self.tick_hooks:
            hook()
        return results

    def run_until_idle(self, max_ticks: int = 5000) -> dict[str, ActionResult]:
        out: dict[str, ActionResult] = {}
        for _ in range(max_ticks):
            if all(a is None for a in self._active.values()):
                break
            out.update(self.tick())
        return out

    def act(self, agent_id: str, cmd: ActionCommand, max_ticks: int = 5000) -> ActionResult:
        """begin_action plus ticking until this agent's action resolves."""
        self.begin_action(agent_id, cmd)
        for _ in range(max_ticks):
            results = self.tick()
            if agent_id in results:
                return results[agent_id]
            if self._active[agent_id] is None:  # pragma: no cover - safety net
                break
        self.cancel_action(agent_id)
        return ActionResult(Status.INTERRUPTED, reason="MaxTicks")

    def cancel_action(self, agent_id: str) -> None:
        """Drop any scheduled action; logged so episode replay stays aligned."""
        if self._active[agent_id] is None:
            return
        self._active[agent_id] = None
        self.scene.emit("interrupt", {"agent": agent_id}, lane=_lane(agent_id))

    def step_idle(self, n: int) -> None:
        for _ in range(n):
            self.tick()

    def _flush_world(self) -> None:
        if not self._settled_dirty:
            return
        self._settled_dirty = False
        now = contacts(self.scene)
        for pair in sorted(now - self._last_contacts):
            self.scene.emit("contact", {"pair": list(pair)}, lane=LANE_WORLD)
        for pair in sorted(self._last_contacts - now):
            self.scene.emit("separation", {"pair": list(pair)}, lane=LANE_WORLD)
        self._last_contacts = now

    def _settle_now(self) -> None:
        settle(self.scene)
        self._settled_dirty = True

    # -- per-verb stepping ---------------------------------------------------------

    def _step(self, agent_id: str, active: _Active) -> ActionResult | None:
        agent = self.agents[agent_id]
        if active.fail is not None:
            return ActionResult(Status.FAILED, reason=active.fail)
        verb = active.cmd.verb
        if verb in (Verb.NAVIGATE_TO, Verb.WANDER):
            return self._step_navigation(agent, active)
        if verb in (Verb.WALK_FORWARD, Verb.WALK_BACKWARDS, Verb.RUN, Verb.CRAWL):
            return self._step_straight(agent, active)
        if verb in (Verb.TURN_LEFT, Verb.TURN_RIGHT):
            return self._step_turn(agent, active)
        if verb is Verb.LOOK_AROUND:
            return self._step_lookaround(agent, active)
        if verb is Verb.GRAB:
            return self._do_grab(agent, active)
        if verb is Verb.LOOK_AT:
            return self._step_lookat(agent, active)
        if verb is Verb.TOUCH:
            return self._do_touch(agent, active)
        if verb is Verb.ROTATE:
            return self._do_rotate(agent, active)
        if verb is Verb.PUT_BACK:
            return self._do_put_back(agent)
        raise AssertionError(f"unhandled verb {verb}")  # pragma: no cover

    def _move_agent(self, agent: AgentState, x: float, y: float) -> bool:
        if not self._position_clear(x, y, ignore={agent.held} if agent.held else None):
            return False
        agent.position = (x, y)
        self._carry(agent)
        return True

    def _carry(self, agent: AgentState) -> None:
        if agent.held is None:
            return
        inst = self.scene.instance(agent.held)
        hx, hy, hz = agent.hand_point()
        inst.position = (hx, hy, hz)

    def _step_navigation(self, agent: AgentState, active: _Active) -> ActionResult | None:
        if active.stop_near is not None and self._instance_arrived(agent, active.stop_near):
            self.scene.emit(
                "arrival",
                {"agent": agent.agent_id, "target": active.stop_near,
                 "position": list(agent.position)},
                lane=_lane(agent.agent_id),
            )
            return ActionResult(Status.SUCCEEDED)
        if not active.waypoints:
            if active.stop_near is not None:
                return ActionResult(Status.FAILED, reason="Unreachable")
            self.scene.emit(
                "arrival",
                {"agent": agent.agent_id, "target": list(agent.position),
                 "position": list(agent.position)},
                lane=_lane(agent.agent_id),
            )
            return ActionResult(Status.SUCCEEDED)
        goal = active.waypoints[0]
        dx, dy = goal[0] - agent.position[0], goal[1] - agent.position[1]
        dist = math.hypot(dx, dy)
        step = agent.speed * TICK_DT
        if dist > 1e-12:
            agent.heading = normalize_angle(math.atan2(dy, dx))
        if dist <= step:
            moved = self._move_agent(agent, goal[0], goal[1])
            if moved:
                active.waypoints.pop(0)
        else:
            moved = self._move_agent(
                agent, agent.position[0] + step * dx / dist, agent.position[1] + step * dy / dist
            )
        if not moved:
            # A blocked final leg still counts when the target is already in
            # reach: objects inside containers cannot be walked right up to.
            if active.stop_near is not None:
                tbox = self._target_box(active.stop_near)
                if tbox is not None and self._footprint_distance(agent, tbox) <= REACH:
                    self.scene.emit(
                        "arrival",
                        {"agent": agent.agent_id, "target": active.stop_near,
                         "position": list(agent.position)},
                        lane=_lane(agent.agent_id),
                    )
                    return ActionResult(Status.SUCCEEDED)
            return ActionResult(Status.FAILED, reason="Blocked")
        if active.stop_near is None and not active.waypoints:
            self.scene.emit(
                "arrival",
                {"agent": agent.agent_id, "target": list(goal), "position": list(agent.position)},
                lane=_lane(agent.agent_id),
            )
            return ActionResult(Status.SUCCEEDED)
        return None

    def _step_straight(self, agent: AgentState, active: _Active) -> ActionResult | None:
        verb = active.cmd.verb
        if verb is Verb.RUN:
            agent.posture = Posture.STANDING
            speed = RUN_SPEED
        elif verb is Verb.CRAWL:
            agent.posture = Posture.CRAWLING
            speed = CRAWL_SPEED
        else:
            speed = agent.speed
        direction = 1.0 if verb is not Verb.WALK_BACKWARDS else -1.0
        step = speed * TICK_DT * direction
        x = agent.position[0] + step * math.cos(agent.heading)
        y = agent.position[1] + step * math.sin(agent.heading)
        if not self._move_agent(agent, x, y):
            return ActionResult(Status.FAILED, reason="Blocked")
        active.ticks_left -= 1
        if active.ticks_left <= 0:
            return ActionResult(Status.SUCCEEDED)
        return None

    def _step_turn(self, agent: AgentState, active: _Active) -> ActionResult | None:
        active.ticks_left -= 1
        if active.ticks_left <= 0:
            agent.heading = active.heading_target  # exact quarter turn, no drift
        else:
            sign = 1.0 if active.cmd.verb is Verb.TURN_LEFT else -1.0
            agent.heading = normalize_angle(agent.heading + sign * TURN_RATE * TICK_DT)
        self._carry(agent)
        if active.ticks_left <= 0:
            return ActionResult(Status.SUCCEEDED)
        return None

    def _step_lookaround(self, agent: AgentState, active: _Active) -> ActionResult | None:
        agent.heading = normalize_angle(agent.heading + 2.0 * math.pi / LOOKAROUND_TICKS)
        self._carry(agent)
        for inst in self.scene.instances:
            iid = inst.instance_id
            if iid in active.seen or iid == agent.held:
                continue
            if self._visible(agent, iid):
                active.seen.add(iid)
                agent.gaze = iid
                self.scene.emit(
                    "gaze", {"agent": agent.agent_id, "target": iid}, lane=_lane(agent.agent_id)
                )
        active.sweep_left -= 1
        if active.sweep_left <= 0:
            return ActionResult(Status.SUCCEEDED)
        return None

    def _visible(self, agent: AgentState, instance_id: int) -> bool:
        """Target center within +/-45 deg of heading and the sight line clear."""
        box = self.scene.aabb(instance_id)
        cx, cy, cz = box.center
        ex, ey = agent.position
        bearing = math.atan2(cy - ey, cx - ex)
        diff = abs(normalize_angle(bearing - agent.heading + math.pi) - math.pi)
        if diff > math.pi / 4.0:
            return False
        eye = (ex, ey, agent.eye_height)
        return _segment_clear(self.scene, eye, (cx, cy, cz), skip={instance_id})

    def _step_lookat(self, agent: AgentState, active: _Active) -> ActionResult | None:
        box = self._target_box(active.cmd.target)
        if box is None:
            return ActionResult(Status.FAILED, reason="UnknownTarget")
        cx, cy, _ = box.center
        bearing = math.atan2(cy - agent.position[1], cx - agent.position[0])
        diff = math.remainder(bearing - agent.heading, 2.0 * math.pi)
        step = TURN_RATE * TICK_DT
        if abs(diff) <= step:
            agent.heading = normalize_angle(bearing)
            agent.gaze = active.cmd.target
            self._carry(agent)
            self.scene.emit(
                "gaze",
                {"agent": agent.agent_id, "target": active.cmd.target},
                lane=_lane(agent.agent_id),
            )
            return ActionResult(Status.SUCCEEDED)
        agent.heading = normalize_angle(agent.heading + math.copysign(step, diff))
        self._carry(agent)
        return None

    def _do_grab(self, agent: AgentState, active: _Active) -> ActionResult:
        target = active.cmd.target
        if not self.scene.has_instance(target):
            return ActionResult(Status.FAILED, reason="UnknownTarget")
        inst = self.scene.instance(target)
        inst.held_by = agent.agent_id
        inst.supported_by = None
        inst.contained_in = None
        agent.held = target
        agent.gaze = target
        self._carry(agent)
        self._settle_now()  # whatever it was supporting falls
        self.scene.emit(
            "grab", {"agent": agent.agent_id, "target": target}, lane=_lane(agent.agent_id)
        )
        return ActionResult(Status.SUCCEEDED)

    def _do_touch(self, agent: AgentState, active: _Active) -> ActionResult:
        target = active.cmd.target
        if not self.scene.has_instance(target):
            return ActionResult(Status.FAILED, reason="UnknownTarget")
        agent.gaze = target
        self.scene.emit(
            "touch", {"agent": agent.agent_id, "target": target}, lane=_lane(agent.agent_id)
        )
        return ActionResult(Status.SUCCEEDED)

    def _do_rotate(self, agent: AgentState, active: _Active) -> ActionResult:
        target = active.cmd.target
        if not self.scene.has_instance(target):
            return ActionResult(Status.FAILED, reason="UnknownTarget")
        inst = self.scene.instance(target)
        new_yaw = normalize_angle(inst.yaw + ROTATE_STEP)
        if inst.held_by is None:
            old_yaw = inst.yaw
            inst.yaw = new_yaw
            cls = self.scene.catalog.get(inst.class_id)
            box = aabb_of(inst, cls)
            bad = not in_bounds(self.scene.grid, box) or any(
                pair
                for pair in separation_violations(self.scene)
                if target in (pair[0], pair[1])
            )
            if bad:
                inst.yaw = old_yaw
                return ActionResult(Status.FAILED, reason="Blocked")
            self._settle_now()
        else:
            inst.yaw = new_yaw
        self.scene.emit(
            "rotate",
            {"agent": agent.agent_id, "target": target, "yaw": inst.yaw},
            lane=_lane(agent.agent_id),
        )
        return ActionResult(Status.SUCCEEDED)

    def _do_put_back(self, agent: AgentState) -> ActionResult:
        held = agent.held
        if held is None:
            return ActionResult(Status.FAILED, reason="HandEmpty")
        inst = self.scene.instance(held)
        spot = self._find_release_spot(held, inst.spawn_position[:2])
        if spot is None:
            return ActionResult(Status.FAILED, reason="PlacementExhausted")
        self._release_at(agent, held, spot)
        return ActionResult(Status.SUCCEEDED)

    # -- placement of released objects ------------------------------------------

    def _avoid(self) -> tuple[tuple[float, float], ...]:
        return tuple(a.position for a in self.agents.values())

    def _find_release_spot(
        self,
        instance_id: int,
        around: tuple[float, float],
        floor_only: bool = False,
    ) -> tuple[float, float] | None:
        return find_release_spot(
            self.scene, instance_id, around, floor_only=floor_only, avoid=self._avoid()
        )

    def _release_at(self, agent: AgentState, instance_id: int, spot: tuple[float, float],
                    drop_from: float = 0.0) -> None:
        inst = self.scene.instance(instance_id)
        inst.position = (spot[0], spot[1], drop_from)
        inst.held_by = None
        agent.held = None
        self._settle_now()
        self.scene.emit(
            "release",
            {
                "agent": agent.agent_id,
                "target": instance_id,
                "position": list(inst.position),
            },
            lane=_lane(agent.agent_id),
        )

    # -- teacher cues ----------------------------------------------------------

    def apply_cue(self, actor: str, op: str, **params) -> None:
        """Teacher-level primitives used by lesson scripts.

        ``point_at`` and ``say`` are parent-only; guided placement is shared
        so a scripted learner can reuse compiled plans.
        """
        if op in ("point_at", "say") and actor != PARENT:
            raise BadCommand(f"{actor} cannot {op}")
        self.scene.emit("cue", {"actor": actor, "op": op, "params": params}, lane=_lane(actor))
        handler = getattr(self, f"_cue_{op}", None)
        if handler is None:
            raise BadCommand(f"unknown cue {op!r}")
        handler(self.agents[actor], **params)

    def _cue_point_at(self, agent: AgentState, target: int) -> None:
        if not self.scene.has_instance(target):
            raise UnknownTarget(f"no instance {target}")
        agent.pointing_at = target
        agent.gaze = target
        self.scene.emit(
            "point", {"agent": agent.agent_id, "target": target}, lane=_lane(agent.agent_id)
        )

    def _cue_say(self, agent: AgentState, utterance: dict) -> None:
        self.scene.emit(
            "utterance", {"agent": agent.agent_id, **utterance}, lane=_lane(agent.agent_id)
        )

    def _cue_place_over(self, agent: AgentState, ground: int) -> None:
        """Lower the held object over ``ground`` until support: the guided
        version of putting something down on (or into) a thing."""
        held = agent.held
        if held is None:
            raise HandEmpty(f"{agent.agent_id} holds nothing to place")
        if not self.scene.has_instance(ground):
            raise UnknownTarget(f"no instance {ground}")
        ginst = self.scene.instance(ground)
        if ginst.held_by is not None:
            raise UnknownTarget(f"ground {ground} is being held")
        gbox = self.scene.aabb(ground)
        if self._footprint_distance(agent, gbox) > REACH:
            raise OutOfReach(f"ground {ground} is beyond reach")
        drop_z = gbox.max[2] + RELEASE_DROP
        if drop_z > MAX_REACH_HEIGHT:
            raise OutOfReach(f"ground {ground} is too high to place onto")
        spot = placement_spot(self.scene, held, ground)
        if spot is None:
            raise PlacementExhausted(f"no room on {ground} for {held}")
        self._release_at(agent, held, spot, drop_from=drop_z)

    def _cue_release_free(self, agent: AgentState) -> None:
        """Set the held object down on open floor near the agent."""
        held = agent.held
        if held is None:
            raise HandEmpty(f"{agent.agent_id} holds nothing")
        spot = self._find_release_spot(held, agent.position, floor_only=True)
        if spot is None:
            raise PlacementExhausted("no free spot near the agent")
        self._release_at(agent, held, spot)

    def _cue_release_near(self, agent: AgentState, ground: int) -> None:
        """Set the held object down on the floor beside ``ground`` so the two
        end up close without one resting on the other."""
        held = agent.held
        if held is None:
            raise HandEmpty(f"{agent.agent_id} holds nothing")
        if not self.scene.has_instance(ground):
            raise UnknownTarget(f"no instance {ground}")
        spot = near_release_spot(self.scene, held, ground, avoid=self._avoid())
        if spot is None:
            raise PlacementExhausted(f"no near spot beside {ground}")
        self._release_at(agent, held, spot)

    def _cue_give_to(self, agent: AgentState, recipient: str) -> None:
        held = agent.held
        if held is None:
            raise HandEmpty(f"{agent.agent_id} holds nothing to give")
        other = self.agents[recipient]
        if other.held is not None:
            raise HandFull(f"{recipient} already holds {other.held}")
        if math.dist(agent.position, other.position) > REACH + AGENT_RADIUS:
            raise OutOfReach(f"{recipient} is too far away")
        inst = self.scene.instance(held)
        inst.held_by = recipient
        agent.held = None
        other.held = held
        self._carry(other)
        self.scene.emit(
            "give",
            {"from": agent.agent_id, "to": recipient, "target": held},
            lane=_lane(agent.agent_id),
        )


def _lane(agent_id: str) -> int:
    return LANE_CHILD if agent_id == CHILD else LANE_PARENT


def placement_spot(scene: Scene, figure: int, ground: int) -> tuple[float, float] | None:
    """Find a drop point whose settled pose lands on/in the ground with
    clearance to siblings; candidates fan out from the center."""
    inst = scene.instance(figure)
    cls = scene.catalog.get(inst.class_id)
    ginst = scene.instance(ground)
    gcls = scene.catalog.get(ginst.class_id)
    if gcls.is_container:
        region = cavity_aabb(ginst, gcls)
    else:
        region = aabb_of(ginst, gcls)
    rcx, rcy = region.footprint_center
    hx = (region.max[0] - region.min[0]) / 2.0
    hy = (region.max[1] - region.min[1]) / 2.0
    fx, fy = rotated_half_extents(cls.extents, inst.yaw)
    # Raster order from the most negative corner: greedy corner-first packing
    # admits tight multi-object fills that center-first ordering never can.
    nx = max(int((hx - fx) / 0.08), 0)
    ny = max(int((hy - fy) / 0.08), 0)
    for iy in range(-ny, ny + 1):
        for ix in range(-nx, nx + 1):
            spot = (rcx + ix * 0.08, rcy + iy * 0.08)
            if _drop_lands_on(scene, figure, ground, spot):
                return spot
    return None


def _drop_lands_on(scene: Scene, figure: int, ground: int, spot: tuple[float, float]) -> bool:
    inst = scene.instance(figure)
    gbox = scene.aabb(ground)
    saved = (inst.position, inst.held_by, inst.supported_by, inst.contained_in)
    inst.position = (spot[0], spot[1], gbox.max[2] + RELEASE_DROP)
    inst.held_by = None
    settle(scene)
    cls = scene.catalog.get(inst.class_id)
    box = aabb_of(inst, cls)
    ok = (
        (inst.supported_by == ground or inst.contained_in == ground)
        and in_bounds(scene.grid, box)
        and not any(figure in (a, b) for a, b, _ in separation_violations(scene))
        and _sibling_gap_ok(scene, figure, ground)
    )
    inst.position, inst.held_by, inst.supported_by, inst.contained_in = saved
    settle(scene)
    return ok


def _sibling_gap_ok(scene: Scene, figure: int, ground: int) -> bool:
    box = scene.aabb(figure)
    for other in scene.instances:
        if other.instance_id in (figure, ground) or other.held_by is not None:
            continue
        if other.supported_by == ground or other.contained_in == ground:
            obox = scene.aabb(other.instance_id)
            if obox.max[2] <= box.min[2] or obox.min[2] >= box.max[2]:
                continue  # vertically separated, e.g. a lid above contents
            if horizontal_gap(box, obox) < SIBLING_GAP:
                return False
    return True


def find_release_spot(
    scene: Scene,
    instance_id: int,
    around: tuple[float, float],
    floor_only: bool = False,
    avoid: tuple[tuple[float, float], ...] = (),
) -> tuple[float, float] | None:
    """Deterministic spiral over cells around ``around``; first legal wins."""
    grid = scene.grid
    cx, cy = grid.cell_of(*around)
    max_r = max(grid.width_cells, grid.depth_cells)
    for r in range(max_r + 1):
        ring = [
            (dx, dy)
            for dx in range(-r, r + 1)
            for dy in range(-r, r + 1)
            if max(abs(dx), abs(dy)) == r
        ]
        for dx, dy in sorted(ring):
            ix, iy = cx + dx, cy + dy
            if not grid.in_grid(ix, iy):
                continue
            spot = grid.cell_center(ix, iy) if (dx, dy) != (0, 0) else around
            if release_spot_legal(scene, instance_id, spot, floor_only=floor_only, avoid=avoid):
                return spot
    return None


def release_spot_legal(
    scene: Scene,
    instance_id: int,
    spot: tuple[float, float],
    floor_only: bool = False,
    avoid: tuple[tuple[float, float], ...] = (),
) -> bool:
    inst = scene.instance(instance_id)
    saved = (inst.position, inst.held_by, inst.supported_by, inst.contained_in)
    inst.position = (spot[0], spot[1], 0.0)
    inst.held_by = None
    settle(scene)
    cls = scene.catalog.get(inst.class_id)
    box = aabb_of(inst, cls)
    ok = in_bounds(scene.grid, box) and not any(
        instance_id in (a, b) for a, b, _ in separation_violations(scene)
    )
    if ok and floor_only:
        ok = inst.supported_by is None and inst.contained_in is None
    if ok:
        # no avatar may end up standing inside the placed object
        for pos in avoid:
            if _point_rect_distance(pos[0], pos[1], box) < AGENT_RADIUS:
                ok = False
                break
    inst.position, inst.held_by, inst.supported_by, inst.contained_in = saved
    settle(scene)
    return ok


def near_release_spot(
    scene: Scene,
    instance_id: int,
    ground: int,
    avoid: tuple[tuple[float, float], ...] = (),
) -> tuple[float, float] | None:
    """Floor spot beside ``ground`` that satisfies the nearness predicate.

    Candidates sit just outside the separation buffer along 16 compass
    directions from the ground's footprint; cell centers alone are too
    coarse to land inside the nearness radius of mid-size objects.
    """
    from playroom.kinetics import Relation, eval_predicate

    gbox = scene.aabb(ground)
    gcx, gcy = gbox.footprint_center
    ghx = (gbox.max[0] - gbox.min[0]) / 2.0
    ghy = (gbox.max[1] - gbox.min[1]) / 2.0
    inst = scene.instance(instance_id)
    cls = scene.catalog.get(inst.class_id)
    fx, fy = rotated_half_extents(cls.extents, inst.yaw)
    reach_out = 0.5 + 0.05 + math.hypot(fx, fy)
    for k in range(16):
        ang = k * math.pi / 8.0
        dx, dy = math.cos(ang), math.sin(ang)
        t = min(
            ghx / abs(dx) if abs(dx) > 1e-9 else math.inf,
            ghy / abs(dy) if abs(dy) > 1e-9 else math.inf,
        )
        spot = (gcx + dx * (t + reach_out), gcy + dy * (t + reach_out))
        if not release_spot_legal(scene, instance_id, spot, floor_only=True, avoid=avoid):
            continue
        saved = (inst.position, inst.held_by, inst.supported_by, inst.contained_in)
        inst.position = (spot[0], spot[1], 0.0)
        inst.held_by = None
        settle(scene)
        near = eval_predicate(scene, Relation.NEAR, instance_id, ground)
        inst.position, inst.held_by, inst.supported_by, inst.contained_in = saved
        settle(scene)
        if near:
            return spot
    return None


def dry_run_placements(scene: Scene, placements: list[tuple[int, int]]) -> bool:
    """Check that a sequence of guided placements can all find spots.

    Runs the real placement search against the live scene, committing each
    step so later ones see earlier ones, then restores every instance; used
    by lesson binding so compiled plans do not strand the teacher.
    """
    saved = {
        inst.instance_id: (inst.position, inst.held_by, inst.supported_by, inst.contained_in)
        for inst in scene.instances
    }
    ok = True
    try:
        for figure, ground in placements:
            spot = placement_spot(scene, figure, ground)
            if spot is None:
                ok = False
                break
            inst = scene.instance(figure)
            gbox = scene.aabb(ground)
            inst.position = (spot[0], spot[1], gbox.max[2] + RELEASE_DROP)
            inst.held_by = None
            settle(scene)
    finally:
        for inst in scene.instances:
            pos, held, sup, cont = saved[inst.instance_id]
            inst.position = pos
            inst.held_by = held
            inst.supported_by = sup
            inst.contained_in = cont
    return ok


def leg_arrives(
    scene: Scene,
    start: tuple[float, float],
    box: Aabb,
    ignore: set[int] | None = None,
) -> bool:
    """Simulate the straight final walk from ``start`` toward ``box``.

    True when the walk ends within APPROACH_DISTANCE, or gets blocked while
    the footprint is still within grabbing REACH; mirrors the per-tick motion
    so navigation only targets cells it can actually finish from.
    """
    x, y = start
    tx, ty = box.footprint_center
    step = WALK_SPEED * TICK_DT
    for _ in range(int(math.hypot(tx - x, ty - y) / step) + 3):
        if _point_rect_distance(x, y, box) <= APPROACH_DISTANCE:
            return True
        d = math.hypot(tx - x, ty - y)
        if d <= step:
            nx, ny = tx, ty
        else:
            nx, ny = x + step * (tx - x) / d, y + step * (ty - y) / d
        if not position_clear(scene, nx, ny, ignore=ignore):
            return _point_rect_distance(x, y, box) <= REACH
        x, y = nx, ny
    return _point_rect_distance(x, y, box) <= APPROACH_DISTANCE


def segment_walkable(
    scene: Scene,
    a: tuple[float, float],
    b: tuple[float, float],
    ignore: set[int] | None = None,
) -> bool:
    """No object's inflated footprint meets the axis-aligned segment a-b.

    Waypoint edges run between cell centers, so interval arithmetic gives the
    exact segment-to-rectangle gap without stepping.
    """
    x0, x1 = min(a[0], b[0]), max(a[0], b[0])
    y0, y1 = min(a[1], b[1]), max(a[1], b[1])
    ignore = ignore or set()
    for inst in scene.instances:
        if inst.held_by is not None or inst.instance_id in ignore:
            continue
        box = aabb_of(inst, scene.catalog.get(inst.class_id))
        gx = max(box.min[0] - x1, 0.0, x0 - box.max[0])
        gy = max(box.min[1] - y1, 0.0, y0 - box.max[1])
        if math.hypot(gx, gy) < AGENT_RADIUS:
            return False
    return True


def walk_clear(
    scene: Scene,
    start: tuple[float, float],
    goal: tuple[float, float],
    ignore: set[int] | None = None,
) -> bool:
    """Step the per-tick walk rule along start-goal; True if never blocked."""
    x, y = start
    tx, ty = goal
    step = WALK_SPEED * TICK_DT
    for _ in range(int(math.hypot(tx - x, ty - y) / step) + 2):
        d = math.hypot(tx - x, ty - y)
        if d <= 1e-12:
            return True
        if d <= step:
            nx, ny = tx, ty
        else:
            nx, ny = x + step * (tx - x) / d, y + step * (ty - y) / d
        if not position_clear(scene, nx, ny, ignore=ignore):
            return False
        x, y = nx, ny
    return True


def position_clear(scene: Scene, x: float, y: float, ignore: set[int] | None = None) -> bool:
    """An avatar center may stand here: inside the walls, clear of objects."""
    x0, y0, x1, y1 = scene.grid.bounds()
    if not (x0 + AGENT_RADIUS <= x <= x1 - AGENT_RADIUS
            and y0 + AGENT_RADIUS <= y <= y1 - AGENT_RADIUS):
        return False
    ignore = ignore or set()
    for inst in scene.instances:
        if inst.held_by is not None or inst.instance_id in ignore:
            continue
        box = aabb_of(inst, scene.catalog.get(inst.class_id))
        if _point_rect_distance(x, y, box) < AGENT_RADIUS:
            return False
    return True


def occupancy_grid(scene: Scene) -> list[list[bool]]:
    grid = scene.grid
    return [
        [not position_clear(scene, *grid.cell_center(ix, iy)) for ix in range(grid.width_cells)]
        for iy in range(grid.depth_cells)
    ]


def clear_cells_by_centrality(scene: Scene) -> list[tuple[int, int]]:
    """Avatar-clear cells, innermost first; index breaks ties."""
    grid = scene.grid
    cx, cy = grid.width_cells // 2, grid.depth_cells // 2
    blocked = occupancy_grid(scene)
    cells = [
        (ix, iy)
        for iy in range(grid.depth_cells)
        for ix in range(grid.width_cells)
        if not blocked[iy][ix]
    ]
    cells.sort(key=lambda c: (max(abs(c[0] - cx), abs(c[1] - cy)), grid.cell_index(*c)))
    return cells


def agent_homes(scene: Scene) -> dict[str, tuple[float, float]]:
    """Initial avatar positions: the two most central avatar-clear cells."""
    cells = clear_cells_by_centrality(scene)
    if len(cells) < 2:
        raise PlacementExhausted("no clear cells for the avatars")
    grid = scene.grid
    return {CHILD: grid.cell_center(*cells[0]), PARENT: grid.cell_center(*cells[1])}


def nav_dims(grid: GridSpec) -> tuple[int, int]:
    return grid.width_cells * NAV_DIVISIONS, grid.depth_cells * NAV_DIVISIONS


def nav_pitch(grid: GridSpec) -> float:
    return grid.cell_size / NAV_DIVISIONS


def nav_center(grid: GridSpec, ix: int, iy: int) -> tuple[float, float]:
    s = nav_pitch(grid)
    x0, y0 = grid.origin
    return (x0 + (ix + 0.5) * s, y0 + (iy + 0.5) * s)


def nav_cell_of(grid: GridSpec, x: float, y: float) -> tuple[int, int]:
    s = nav_pitch(grid)
    x0, y0 = grid.origin
    return (int((x - x0) // s), int((y - y0) // s))


def nav_index(grid: GridSpec, ix: int, iy: int) -> int:
    return iy * grid.width_cells * NAV_DIVISIONS + ix


def nav_blocked(scene: Scene) -> list[list[bool]]:
    """blocked[iy][ix] over the walk lattice; held objects never block."""
    nx, ny = nav_dims(scene.grid)
    return [
        [not position_clear(scene, *nav_center(scene.grid, ix, iy)) for ix in range(nx)]
        for iy in range(ny)
    ]


def approach_band(grid: GridSpec) -> float:
    """Goal-cell distance bound wide enough that the lattice cannot miss."""
    return APPROACH_DISTANCE + nav_pitch(grid) * 0.75


def entry_cells(
    scene: Scene,
    position: tuple[float, float],
    blocked: list[list[bool]],
    ignore: set[int] | None = None,
) -> list[tuple[tuple[int, int], list[tuple[float, float]]]]:
    """Lattice cells an off-lattice stander can step onto, nearest first.

    Each entry pairs the cell with the waypoints that put the stander on its
    center; the short entry walk gets the same collision vetting as every
    later path segment.
    """
    grid = scene.grid
    nx, ny = nav_dims(grid)
    cx, cy = nav_cell_of(grid, *position)
    candidates = [(cx + dx, cy + dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    candidates.sort(key=lambda c: (math.dist(position, nav_center(grid, *c)), c))
    out: list[tuple[tuple[int, int], list[tuple[float, float]]]] = []
    for cell in candidates:
        if not (0 <= cell[0] < nx and 0 <= cell[1] < ny) or blocked[cell[1]][cell[0]]:
            continue
        center = nav_center(grid, *cell)
        if math.dist(position, center) <= 1e-9:
            out.append((cell, []))
        elif walk_clear(scene, position, center, ignore=ignore):
            out.append((cell, [center]))
    return out


def nav_component(
    scene: Scene,
    start: tuple[float, float],
    ignore: set[int] | None = None,
) -> set[tuple[int, int]]:
    """Walk-lattice cells reachable from ``start``, every edge collision-vetted."""
    grid = scene.grid
    nx, ny = nav_dims(grid)
    blocked = nav_blocked(scene)
    seen = {cell for cell, _ in entry_cells(scene, start, blocked, ignore)}
    stack = list(seen)
    while stack:
        cur = stack.pop()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (cur[0] + dx, cur[1] + dy)
            if (
                nxt in seen
                or not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny)
                or blocked[nxt[1]][nxt[0]]
                or not segment_walkable(
                    scene, nav_center(grid, *cur), nav_center(grid, *nxt), ignore=ignore
                )
            ):
                continue
            seen.add(nxt)
            stack.append(nxt)
    return seen


def _point_rect_distance(x: float, y: float, box: Aabb) -> float:
    dx = max(box.min[0] - x, 0.0, x - box.max[0])
    dy = max(box.min[1] - y, 0.0, y - box.max[1])
    return math.hypot(dx, dy)


def _segment_clear(
    scene: Scene,
    start: tuple[float, float, float],
    end: tuple[float, float, float],
    skip: set[int],
) -> bool:
    """True when no other object's box cuts the open segment start..end."""
    for inst in scene.instances:
        if inst.instance_id in skip or inst.held_by is not None:
            continue
        cls = scene.catalog.get(inst.class_id)
        boxes: Iterable[Aabb]
        if cls.shape is Shape.OPEN_BOX:
            boxes = _openbox_occluders(aabb_of(inst, cls), cavity_aabb(inst, cls))
        else:
            boxes = (aabb_of(inst, cls),)
        for box in boxes:
            if _segment_hits_box(start, end, box):
                return False
    return True


def _openbox_occluders(outer: Aabb, cavity: Aabb) -> list[Aabb]:
    """Five slabs (floor + four walls) so sight lines can pass over the rim."""
    (x0, y0, z0), (x1, y1, z1) = outer.min, outer.max
    (cx0, cy0, cz0), (cx1, cy1, _) = cavity.min, cavity.max
    return [
        Aabb((x0, y0, z0), (x1, y1, cz0)),  # floor slab
        Aabb((x0, y0, cz0), (cx0, y1, z1)),
        Aabb((cx1, y0, cz0), (x1, y1, z1)),
        Aabb((cx0, y0, cz0), (cx1, cy0, z1)),
        Aabb((cx0, cy1, cz0), (cx1, y1, z1)),
    ]


def _segment_hits_box(
    start: tuple[float, float, float],
    end: tuple[float, float, float],
    box: Aabb,
) -> bool:
    tmin, tmax = 0.0, 0.999  # open at the far end: stopping at the target is fine
    for axis in range(3):
        d = end[axis] - start[axis]
        if abs(d) < 1e-12:
            if not (box.min[axis] <= start[axis] <= box.max[axis]):
                return False
            continue
        t1 = (box.min[axis] - start[axis]) / d
        t2 = (box.max[axis] - start[axis]) / d
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
        if tmin > tmax:
            return False
    return True
