"""Evaluation tasks: demonstrate-the-concept, forced-choice Q&A, fill-in-blank.

Every task carries a prompt realized through the language module and an
answer key computed from the spatial predicates at generation time.  Keys
stay sealed: they are omitted from the wire/task-file form and live in a
separate key file, so task sets can be handed to an agent answer-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from playroom.agents import CHILD, Simulation, Status
from playroom.errors import KindMismatch, NoViableTask, ParseError, PlayroomError
from playroom.kinetics import Relation, eval_predicate
from playroom.language import SlotValue, Utterance, noun_phrase, realize
from playroom.lessons import (
    ActStep,
    LessonScript,
    Registry,
    RelationGoal,
    compile_lesson,
    default_registry,
)
from playroom.rng import Rng
from playroom.world import Scene, canonical_json

# Prepositions the question formats quiz; observer-free and mutually
# falsifiable, which forced-choice grading needs.
PREPOSITIONS = (Relation.ON, Relation.IN, Relation.UNDER, Relation.NEAR)

# Relations a child can be asked to demonstrate; each maps to the lesson
# concept whose compiled script achieves it.
DEMONSTRATE_CONCEPTS = ("on", "in", "near")
_DEMONSTRATE_TEMPLATES = {
    "on": "put {fig#np} on {ground#np}.",
    "in": "keep {fig#np} in {ground#np}.",
    "near": "put {fig#np} near {ground#np}.",
}

DEFAULT_BUDGET_TICKS = 1200  # 60 s at 20 Hz
# Task seeds fit in 53 bits so they survive a JSON round trip through
# IEEE-double clients unchanged.
_SEED_SPAN = 1 << 53


class TaskKind(str, Enum):
    DEMONSTRATE = "Demonstrate"
    QA = "QA"
    FILL_IN_BLANK = "FillInBlank"


@dataclass(frozen=True)
class TaskSpec:
    """One evaluation item; ``key`` is sealed (absent from :meth:`to_doc`)."""

    task_id: str
    kind: TaskKind
    prompt: Utterance
    target_predicate: tuple[Relation, int, int] | None
    choices: tuple[str, ...] | None
    time_budget_ticks: int
    seed: int
    key: frozenset[str] | None

    def __post_init__(self):
        if self.time_budget_ticks <= 0:
            raise ParseError("time_budget_ticks must be positive")
        if self.kind is TaskKind.DEMONSTRATE and self.target_predicate is None:
            raise ParseError("Demonstrate tasks need a target predicate")
        if self.kind is TaskKind.QA and not self.choices:
            raise ParseError("QA tasks need choices")
        if (
            self.kind is TaskKind.FILL_IN_BLANK
            and self.prompt.text.count("___") != 1
        ):
            raise ParseError("FillInBlank prompts need exactly one blank")

    def to_doc(self) -> dict:
        """Wire/file form shared with agents; never includes the key."""
        target = None
        if self.target_predicate is not None:
            relation, figure, ground = self.target_predicate
            target = {"relation": relation.value, "figure": figure, "ground": ground}
        return {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "prompt": self.prompt.to_doc(),
            "target_predicate": target,
            "choices": list(self.choices) if self.choices is not None else None,
            "time_budget_ticks": self.time_budget_ticks,
            "seed": self.seed,
        }

    @staticmethod
    def from_doc(doc: dict, key: frozenset[str] | None = None) -> "TaskSpec":
        target = doc.get("target_predicate")
        predicate = None
        if target is not None:
            predicate = (Relation(target["relation"]), target["figure"], target["ground"])
        choices = doc.get("choices")
        return TaskSpec(
            task_id=doc["task_id"],
            kind=TaskKind(doc["kind"]),
            prompt=Utterance.from_doc(doc["prompt"]),
            target_predicate=predicate,
            choices=tuple(choices) if choices is not None else None,
            time_budget_ticks=doc["time_budget_ticks"],
            seed=doc["seed"],
            key=key,
        )

    def key_doc(self) -> dict:
        return {
            "task_id": self.task_id,
            "key": sorted(self.key) if self.key is not None else None,
        }


@dataclass(frozen=True)
class Verdict:
    task_id: str
    passed: bool
    detail: str
    ticks_used: int

    def to_doc(self) -> dict:
        return {
            "task_id": self.task_id,
            "passed": self.passed,
            "detail": self.detail,
            "ticks_used": self.ticks_used,
        }


def _pair_truths(scene: Scene, figure: int, ground: int) -> dict[Relation, bool]:
    return {
        rel: eval_predicate(scene, rel, figure, ground) for rel in PREPOSITIONS
    }


def _question_pairs(
    scene: Scene, registry: Registry
) -> list[tuple[int, int, dict[Relation, bool]]]:
    """Ordered (figure, ground) pairs a question can be asked about.

    Both noun phrases must be definite (a question with an ambiguous "a ball"
    has no checkable answer), and the pair must have at least one true and
    one false preposition so a key and a distractor both exist.
    """
    lexicon = registry.lexicon
    ids = [inst.instance_id for inst in scene.instances if inst.held_by is None]
    definite = [
        i for i in ids if noun_phrase(scene, lexicon, i).text.startswith("the ")
    ]
    pairs = []
    for figure in definite:
        for ground in definite:
            if figure == ground:
                continue
            truths = _pair_truths(scene, figure, ground)
            if any(truths.values()) and not all(truths.values()):
                pairs.append((figure, ground, truths))
    return pairs


def _word_slot(relation: Relation) -> SlotValue:
    return SlotValue(text=relation.value)


def _generate_qa(scene: Scene, registry: Registry, task_seed: int) -> TaskSpec:
    rng = Rng(task_seed).derive("task/qa")
    pairs = _question_pairs(scene, registry)
    if not pairs:
        raise NoViableTask("no pair supports a determinate question")
    figure, ground, truths = pairs[rng.randrange(len(pairs))]
    true_rels = [rel for rel in PREPOSITIONS if truths[rel]]
    false_rels = [rel for rel in PREPOSITIONS if not truths[rel]]
    answer = true_rels[rng.randrange(len(true_rels))]
    distractor = false_rels[rng.randrange(len(false_rels))]
    first, second = (
        (answer, distractor) if rng.randrange(2) == 0 else (distractor, answer)
    )
    lexicon = registry.lexicon
    prompt = realize(
        "is {fig#np} {first#word} {ground#np} or {second#word} it?",
        {
            "fig#np": noun_phrase(scene, lexicon, figure),
            "ground#np": noun_phrase(scene, lexicon, ground),
            "first#word": _word_slot(first),
            "second#word": _word_slot(second),
        },
        level=3,
        concept="qa",
    )
    return TaskSpec(
        task_id=f"qa-{task_seed:014x}",
        kind=TaskKind.QA,
        prompt=prompt,
        target_predicate=None,
        choices=(first.value, second.value),
        time_budget_ticks=DEFAULT_BUDGET_TICKS,
        seed=task_seed,
        key=frozenset({answer.value}),
    )


def _generate_fill_in_blank(
    scene: Scene, registry: Registry, task_seed: int
) -> TaskSpec:
    rng = Rng(task_seed).derive("task/fib")
    pairs = _question_pairs(scene, registry)
    if not pairs:
        raise NoViableTask("no pair supports a fill-in-the-blank")
    figure, ground, truths = pairs[rng.randrange(len(pairs))]
    lexicon = registry.lexicon
    prompt = realize(
        "{fig#np} is ___ {ground#np}.",
        {
            "fig#np": noun_phrase(scene, lexicon, figure),
            "ground#np": noun_phrase(scene, lexicon, ground),
        },
        level=3,
        concept="fill_in_blank",
    )
    key = frozenset(rel.value for rel in PREPOSITIONS if truths[rel])
    return TaskSpec(
        task_id=f"fib-{task_seed:014x}",
        kind=TaskKind.FILL_IN_BLANK,
        prompt=prompt,
        target_predicate=None,
        choices=None,
        time_budget_ticks=DEFAULT_BUDGET_TICKS,
        seed=task_seed,
        key=key,
    )


def demonstration_script(
    scene: Scene,
    concept: str,
    task_seed: int,
    registry: Registry | None = None,
) -> LessonScript:
    """The deterministic child script for a demonstrate task's concept.

    Task generation uses it to bind the target pair; a scripted perfect
    agent re-derives the identical script from (scene, concept, seed).
    """
    return compile_lesson(
        scene,
        concept,
        level=2,
        rng=Rng(task_seed).derive(f"task/demo/{concept}"),
        actor=CHILD,
        registry=registry,
    )


def _generate_demonstrate(
    scene: Scene, registry: Registry, task_seed: int, budget: int
) -> TaskSpec:
    rng = Rng(task_seed).derive("task/demo")
    lexicon = registry.lexicon
    concepts = list(DEMONSTRATE_CONCEPTS)
    rng.shuffle(concepts)
    script = None
    prompt = None
    for concept in concepts:
        try:
            candidate = demonstration_script(scene, concept, task_seed, registry)
        except PlayroomError:
            continue
        if not isinstance(candidate.goal, RelationGoal):
            continue
        fig_np = noun_phrase(scene, lexicon, candidate.goal.a)
        ground_np = noun_phrase(scene, lexicon, candidate.goal.b)
        # No pointing accompanies a task prompt, so an indefinite phrase
        # ("a brown lid") would leave the target unidentifiable.
        if not (fig_np.text.startswith("the ") and ground_np.text.startswith("the ")):
            continue
        script = candidate
        prompt = realize(
            _DEMONSTRATE_TEMPLATES[concept],
            {"fig#np": fig_np, "ground#np": ground_np},
            level=3,
            concept=concept,
        )
        break
    if script is None:
        raise NoViableTask("no demonstrable concept binds in this scene")
    goal = script.goal
    return TaskSpec(
        task_id=f"demo-{task_seed:014x}",
        kind=TaskKind.DEMONSTRATE,
        prompt=prompt,
        target_predicate=(goal.relation, goal.a, goal.b),
        choices=None,
        time_budget_ticks=budget,
        seed=task_seed,
        key=None,
    )


def generate_task(
    scene: Scene,
    kind: TaskKind | str,
    rng: Rng,
    time_budget_ticks: int = DEFAULT_BUDGET_TICKS,
    registry: Registry | None = None,
) -> TaskSpec:
    """Draw one task of the given kind; reproducible from the rng stream.

    Raises:
        NoViableTask: the scene cannot support the kind.
    """
    kind = TaskKind(kind)
    registry = registry or default_registry()
    task_seed = rng.randrange(_SEED_SPAN)
    if kind is TaskKind.QA:
        return _generate_qa(scene, registry, task_seed)
    if kind is TaskKind.FILL_IN_BLANK:
        return _generate_fill_in_blank(scene, registry, task_seed)
    return _generate_demonstrate(scene, registry, task_seed, time_budget_ticks)


def evaluate_demonstration(
    task: TaskSpec, final_scene: Scene, ticks_used: int | None = None
) -> Verdict:
    """Judge a demonstrate attempt from the end state and elapsed ticks.

    ``ticks_used`` defaults to the scene's tick counter, which equals the
    elapsed count when the attempt started on a fresh scene.
    """
    if task.kind is not TaskKind.DEMONSTRATE:
        raise KindMismatch(f"cannot evaluate a {task.kind.value} task as a demonstration")
    elapsed = final_scene.tick if ticks_used is None else ticks_used
    relation, figure, ground = task.target_predicate
    achieved = eval_predicate(final_scene, relation, figure, ground)
    on_time = elapsed <= task.time_budget_ticks
    if achieved and on_time:
        passed, detail = True, f"{relation.value} achieved in {elapsed} ticks"
    elif achieved:
        passed, detail = False, f"timeout: {elapsed} > {task.time_budget_ticks} ticks"
    else:
        passed, detail = False, f"{relation.value} not achieved"
    return Verdict(
        task_id=task.task_id,
        passed=passed,
        detail=detail,
        ticks_used=min(elapsed, task.time_budget_ticks),
    )


def run_demonstration(
    sim: Simulation, task: TaskSpec, registry: Registry | None = None
) -> Verdict:
    """Scripted perfect child: rebuild the task's script, act it out, judge.

    Assumes the attempt starts from the state the task was generated on,
    which makes the recompiled binding identical to the generator's.
    """
    if task.kind is not TaskKind.DEMONSTRATE:
        raise KindMismatch(f"cannot demonstrate a {task.kind.value} task")
    start_tick = sim.scene.tick
    script = demonstration_script(
        sim.scene, task.prompt.concept, task.seed, registry
    )
    try:
        for step in script.steps:
            if isinstance(step, ActStep):
                result = sim.act(step.agent, step.command)
                if result.status is not Status.SUCCEEDED:
                    break
            else:
                sim.apply_cue(step.actor, step.op, **step.params)
    except PlayroomError:
        pass  # judged on the end state either way
    sim.step_idle(1)
    return evaluate_demonstration(
        task, sim.scene, ticks_used=sim.scene.tick - start_tick
    )


def grade_answer(task: TaskSpec, answer: str) -> Verdict:
    """Case-insensitive, whitespace-trimmed match against the sealed key."""
    if task.kind is TaskKind.DEMONSTRATE:
        raise KindMismatch("Demonstrate tasks are judged by evaluate_demonstration")
    if task.key is None:
        raise KindMismatch(f"task {task.task_id} has no key attached")
    normalized = answer.strip().lower()
    key = {k.strip().lower() for k in task.key}
    if normalized in key:
        return Verdict(task.task_id, True, "correct", 0)
    expected = " or ".join(sorted(key))
    return Verdict(task.task_id, False, f"expected {expected}", 0)


# -- task files ------------------------------------------------------------------


def write_tasks(path: str | Path, tasks: list[TaskSpec]) -> None:
    """Keyless JSONL shareable with agents."""
    lines = [canonical_json(task.to_doc()).decode("utf-8") for task in tasks]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_keys(path: str | Path, tasks: list[TaskSpec]) -> None:
    """Sealed answer keys, one line per keyed task."""
    lines = [
        canonical_json(task.key_doc()).decode("utf-8")
        for task in tasks
        if task.key is not None
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_keys(path: str | Path) -> dict[str, frozenset[str]]:
    keys: dict[str, frozenset[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        keys[doc["task_id"]] = frozenset(doc["key"])
    return keys


def read_tasks(
    path: str | Path, keys: dict[str, frozenset[str]] | None = None
) -> list[TaskSpec]:
    tasks = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        key = (keys or {}).get(doc["task_id"])
        tasks.append(TaskSpec.from_doc(doc, key=key))
    return tasks
