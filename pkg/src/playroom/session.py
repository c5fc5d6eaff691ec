"""One live room per session: scene, simulation, recorder, scripts, tasks.

A session is the unit of isolation the protocol hands out. Every mutating
request funnels through the session lock, so each simulation stays
single-threaded while the server juggles many sessions. All randomness a
handler needs derives from the session seed, which keeps the pair
(seed, request transcript) fully determining every response and log byte.
"""

from __future__ import annotations

import threading
from typing import Mapping

from playroom.agents import AGENT_IDS, ActionCommand, Simulation
from playroom.catalog import Catalog, default_catalog
from playroom.episode import EpisodeRecord, EpisodeRecorder, agent_pose_doc
from playroom.errors import (
    BadCommand,
    MissingObserver,
    SchemaError,
    UnknownScript,
    UnknownTask,
)
from playroom.kinetics import Relation, eval_predicate
from playroom.lessons import (
    LessonOutcome,
    LessonScript,
    Registry,
    compile_lesson,
    default_registry,
    ensure_concept_objects,
    run_lesson,
)
from playroom.rng import Rng
from playroom.sensors import UI_RESOLUTION, default_cameras, frame_to_doc, render_all
from playroom.tasks import (
    TaskKind,
    TaskSpec,
    evaluate_demonstration,
    generate_task,
    grade_answer,
    run_demonstration,
)
from playroom.world import (
    LANE_META,
    GridSpec,
    generate_scene,
    scene_hash,
    scene_metadata,
)

MAX_ACT_TICKS = 5000


def _goal_doc(goal) -> dict:
    doc: dict = {"goal": type(goal).__name__}
    for name in ("relation", "a", "b", "negated", "instance", "agent", "kind",
                 "target", "actor", "fig", "container", "others", "members"):
        if hasattr(goal, name):
            value = getattr(goal, name)
            if isinstance(value, Relation):
                value = value.value
            if isinstance(value, tuple):
                value = list(value)
            doc[name] = value
    return doc


class Session:
    """A seeded room plus everything the protocol can do to it."""

    def __init__(
        self,
        session_id: str,
        seed: int = 0,
        grid: GridSpec | None = None,
        n_interactable: int = 10,
        catalog: Catalog | None = None,
        registry: Registry | None = None,
    ):
        self.session_id = session_id
        self.catalog = catalog or default_catalog()
        self.registry = registry or default_registry()
        self.lock = threading.RLock()
        self._grid = grid
        self._n_interactable = n_interactable
        self._build(seed)

    def _build(self, seed: int) -> None:
        self.seed = seed
        self.scene = generate_scene(
            self.catalog, grid=self._grid, n_interactable=self._n_interactable, seed=seed
        )
        self.sim = Simulation(self.scene)
        self.recorder = EpisodeRecorder(self.sim)
        self.scripts: dict[str, LessonScript] = {}
        self.tasks: dict[str, tuple[TaskSpec, int]] = {}
        self.task_rng = Rng(seed).derive("session/tasks")
        self._script_seq = 0
        self.ui_cameras = default_cameras(self.scene.grid, resolution=UI_RESOLUTION)

    # -- verb bodies -----------------------------------------------------------

    def reset(self, seed: int | None = None) -> dict:
        self._build(self.seed if seed is None else seed)
        return self.get_scene()

    def act(self, payload: Mapping) -> dict:
        agent = payload.get("agent", "child")
        if agent not in AGENT_IDS:
            raise BadCommand(f"unknown agent {agent!r}")
        cmd = ActionCommand.from_doc(_require(payload, "command", dict))
        max_ticks = payload.get("max_ticks", MAX_ACT_TICKS)
        if not isinstance(max_ticks, int) or max_ticks < 1:
            raise BadCommand("max_ticks must be a positive integer")
        result = self.sim.act(agent, cmd, max_ticks=max_ticks)
        return {"result": result.to_doc(), "tick": self.scene.tick}

    def step(self, payload: Mapping) -> dict:
        n = payload.get("n", 1)
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise BadCommand("n must be a non-negative integer")
        for _ in range(n):
            self.sim.tick()
        return {"tick": self.scene.tick}

    def observe(self, payload: Mapping) -> dict:
        cameras = self.ui_cameras
        wanted = payload.get("cameras")
        if wanted is not None:
            if not isinstance(wanted, list) or not wanted:
                raise BadCommand("cameras must be a non-empty list of camera ids")
            by_id = {cam.camera_id: cam for cam in self.ui_cameras}
            missing = [c for c in wanted if c not in by_id]
            if missing:
                raise BadCommand(f"unknown camera ids {missing}")
            cameras = [by_id[c] for c in wanted]
        frames = render_all(self.scene, cameras, agents=self.sim.agents)
        return {"tick": self.scene.tick, "frames": [frame_to_doc(f) for f in frames]}

    def compile_lesson(self, payload: Mapping) -> dict:
        concept = _require(payload, "concept", str)
        level = payload.get("level", 2)
        seed = payload.get("seed", self.seed)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise BadCommand("seed must be an integer")
        if payload.get("prepare", False):
            ensure_concept_objects(self.scene, concept, registry=self.registry)
        rng = Rng(seed).derive(f"lesson/{concept}/l{level}")
        positions = {
            aid: (agent.position[0], agent.position[1])
            for aid, agent in self.sim.agents.items()
        }
        script = compile_lesson(
            self.scene,
            concept,
            level,
            rng,
            actor=payload.get("actor", "parent"),
            registry=self.registry,
            agent_positions=positions,
        )
        self._script_seq += 1
        script_id = f"script-{self._script_seq}"
        self.scripts[script_id] = script
        return {"script_id": script_id, "script": self._script_doc(script)}

    def run_lesson(self, payload: Mapping) -> dict:
        script_id = payload.get("script_id")
        if script_id is not None:
            script = self.scripts.get(script_id)
            if script is None:
                raise UnknownScript(f"no compiled script {script_id!r}")
        else:
            compiled = self.compile_lesson(payload)
            script_id = compiled["script_id"]
            script = self.scripts[script_id]
        outcome = run_lesson(self.sim, script)
        return {"script_id": script_id, "outcome": self._outcome_doc(outcome)}

    def generate_task(self, payload: Mapping) -> dict:
        try:
            kind = TaskKind(_require(payload, "kind", str))
        except ValueError:
            raise BadCommand(f"unknown task kind {payload.get('kind')!r}") from None
        seed = payload.get("seed")
        if seed is None:
            rng = self.task_rng
        elif isinstance(seed, int) and not isinstance(seed, bool):
            rng = Rng(seed).derive("session/tasks")
        else:
            raise BadCommand("seed must be an integer")
        budget = payload.get("time_budget_ticks", 1200)
        if not isinstance(budget, int) or budget < 1:
            raise BadCommand("time_budget_ticks must be a positive integer")
        task = generate_task(
            self.scene, kind, rng, time_budget_ticks=budget, registry=self.registry
        )
        self.tasks[task.task_id] = (task, self.scene.tick)
        return {"task": task.to_doc()}

    def submit_answer(self, payload: Mapping) -> dict:
        task_id = _require(payload, "task_id", str)
        entry = self.tasks.get(task_id)
        if entry is None:
            raise UnknownTask(f"no task {task_id!r} in this session")
        task, created_tick = entry
        if task.kind is TaskKind.DEMONSTRATE:
            verdict = evaluate_demonstration(
                task, self.scene, ticks_used=self.scene.tick - created_tick
            )
        else:
            verdict = grade_answer(task, _require(payload, "answer", str))
        self.scene.emit(
            "verdict",
            {"task_id": task_id, **verdict.to_doc()},
            lane=LANE_META,
        )
        return {"verdict": verdict.to_doc()}

    def run_task(self, payload: Mapping) -> dict:
        """Demonstrate-task helper: solve, then grade. CLI and tests use it."""
        task_id = _require(payload, "task_id", str)
        entry = self.tasks.get(task_id)
        if entry is None:
            raise UnknownTask(f"no task {task_id!r} in this session")
        verdict = run_demonstration(self.sim, entry[0], registry=self.registry)
        self.scene.emit(
            "verdict",
            {"task_id": task_id, **verdict.to_doc()},
            lane=LANE_META,
        )
        return {"verdict": verdict.to_doc()}

    def query_predicate(self, payload: Mapping) -> dict:
        try:
            relation = Relation(_require(payload, "relation", str))
        except ValueError:
            raise BadCommand(f"unknown relation {payload.get('relation')!r}") from None
        a = _require(payload, "a", int)
        b = _require(payload, "b", int)
        observer = payload.get("observer")
        if isinstance(observer, str):
            agent = self.sim.agents.get(observer)
            if agent is None:
                raise MissingObserver(f"unknown observer agent {observer!r}")
            observer = (agent.position[0], agent.position[1], agent.heading)
        elif observer is not None:
            if not (isinstance(observer, list) and len(observer) == 3):
                raise SchemaError("observer must be an agent id or [x, y, heading]")
            observer = (float(observer[0]), float(observer[1]), float(observer[2]))
        value = eval_predicate(self.scene, relation, a, b, observer=observer)
        return {"value": value}

    def get_scene(self) -> dict:
        return {
            "scene": scene_metadata(self.scene),
            # Decimal string: 64-bit hashes overflow JS number precision.
            "hash": str(scene_hash(self.scene)),
            "agents": [
                agent_pose_doc(agent) for _, agent in sorted(self.sim.agents.items())
            ],
            "tick": self.scene.tick,
        }

    def episode(self) -> EpisodeRecord:
        return self.recorder.finish()

    # -- docs ------------------------------------------------------------------

    def _script_doc(self, script: LessonScript) -> dict:
        return {
            "concept": script.concept,
            "level": script.level,
            "actor": script.actor,
            "bindings": {
                k: list(v) if isinstance(v, tuple) else v
                for k, v in script.bindings.items()
            },
            "n_steps": len(script.steps),
            "utterance": script.utterance.to_doc(),
            "goal": _goal_doc(script.goal),
            "point_target": script.point_target,
        }

    def _outcome_doc(self, outcome: LessonOutcome) -> dict:
        return {
            "success": outcome.success,
            "reason": outcome.reason,
            "utterance": outcome.utterance.to_doc() if outcome.utterance else None,
            "tick": self.scene.tick,
        }


def _require(payload: Mapping, key: str, kind: type):
    value = payload.get(key)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise SchemaError(f"payload field {key!r} must be {kind.__name__}")
    return value
