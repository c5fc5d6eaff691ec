"""Command-line front door: scenes, lessons, tasks, grading, replay, serving.

Exit codes: 0 success, 2 validation error (bad input, malformed file),
3 runtime error (simulation failure, replay divergence).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from playroom.agents import Simulation
from playroom.catalog import Catalog, default_catalog, load_catalog
from playroom.episode import EpisodeRecorder, replay_file
from playroom.errors import (
    BadCamera,
    BadCommand,
    BadGrid,
    CorruptEpisode,
    EmptyFilter,
    IdenticalOperands,
    KindMismatch,
    MissingBinding,
    MissingObserver,
    NoViableTask,
    ParseError,
    PlayroomError,
    ProtocolError,
    SchemaError,
    UnknownColor,
    UnknownInstance,
    UnknownNoun,
    UnknownScript,
    UnknownSession,
    UnknownTask,
    UnparseablePhrase,
)
from playroom.lessons import compile_lesson, ensure_concept_objects, run_lesson
from playroom.rng import Rng
from playroom.sensors import (
    DEFAULT_RESOLUTION,
    capture_schedule,
    default_cameras,
    dump_frameset,
    render_all,
)
from playroom.tasks import TaskKind, generate_task, grade_answer, read_keys, read_tasks, write_keys, write_tasks
from playroom.world import GridSpec, generate_scene, scene_hash, scene_metadata

# Bad input or malformed file: the caller can fix the invocation.
_VALIDATION_ERRORS = (
    ParseError,
    SchemaError,
    EmptyFilter,
    BadGrid,
    BadCamera,
    BadCommand,
    CorruptEpisode,
    IdenticalOperands,
    KindMismatch,
    MissingBinding,
    MissingObserver,
    ProtocolError,
    UnknownColor,
    UnknownInstance,
    UnknownNoun,
    UnknownScript,
    UnknownSession,
    UnknownTask,
    UnparseablePhrase,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _load_catalog_arg(path: str | None) -> Catalog:
    return load_catalog(path) if path else default_catalog()


def _parse_grid(text: str | None) -> GridSpec | None:
    if text is None:
        return None
    try:
        w, _, d = text.partition("x")
        return GridSpec(width_cells=int(w), depth_cells=int(d))
    except ValueError as exc:
        raise BadGrid(f"grid must look like 10x10, got {text!r}") from exc


def _parse_resolution(text: str | None) -> tuple[int, int]:
    if text is None:
        return DEFAULT_RESOLUTION
    try:
        w, _, h = text.partition("x")
        return (int(w), int(h))
    except ValueError as exc:
        raise BadCamera(f"resolution must look like 64x64, got {text!r}") from exc


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out and out != "-":
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _build_scene(args):
    catalog = _load_catalog_arg(args.catalog)
    return generate_scene(
        catalog,
        grid=_parse_grid(getattr(args, "grid", None)),
        n_interactable=getattr(args, "n_interactable", 10),
        seed=args.seed,
    )


# -- subcommands ---------------------------------------------------------------


def _cmd_gen_scene(args) -> int:
    scene = _build_scene(args)
    _emit(
        {"scene": scene_metadata(scene), "hash": str(scene_hash(scene))},
        args.out,
    )
    return EXIT_OK


def _cmd_run_lesson(args) -> int:
    scene = _build_scene(args)
    ensure_concept_objects(scene, args.concept)
    sim = Simulation(scene)
    recorder = EpisodeRecorder(sim) if args.episode else None

    frames_written = 0
    if args.frames_dir:
        cameras = default_cameras(scene.grid, resolution=_parse_resolution(args.resolution))
        if args.every < 1:
            raise BadCommand("--every must be a positive integer")

        def _capture() -> None:
            nonlocal frames_written
            if scene.tick % args.every == 0:
                for frame in render_all(scene, cameras, agents=sim.agents):
                    dump_frameset(frame, args.frames_dir)
                    frames_written += 1

        sim.tick_hooks.append(_capture)

    script = compile_lesson(
        scene, args.concept, args.level, Rng(args.seed).derive(f"lesson/{args.concept}")
    )
    outcome = run_lesson(sim, script)

    doc = {
        "concept": script.concept,
        "level": script.level,
        "success": outcome.success,
        "reason": outcome.reason,
        "utterance": outcome.utterance.to_doc() if outcome.utterance else None,
        "ticks": scene.tick,
    }
    if frames_written:
        doc["frames_written"] = frames_written
    if recorder is not None:
        recorder.finish().write(args.episode)
        doc["episode"] = args.episode
    _emit(doc, args.out)
    return EXIT_OK if outcome.success else EXIT_RUNTIME


_KIND_BY_NAME = {
    "qa": TaskKind.QA,
    "fill_in_blank": TaskKind.FILL_IN_BLANK,
    "demonstrate": TaskKind.DEMONSTRATE,
}


def _cmd_gen_tasks(args) -> int:
    scene = _build_scene(args)
    kinds = (
        [_KIND_BY_NAME[args.kind]]
        if args.kind != "all"
        else [TaskKind.QA, TaskKind.FILL_IN_BLANK, TaskKind.DEMONSTRATE]
    )
    rng = Rng(args.seed).derive("cli/tasks")
    tasks = []
    skipped = 0
    for i in range(args.count):
        kind = kinds[i % len(kinds)]
        try:
            tasks.append(generate_task(scene, kind, rng))
        except NoViableTask:
            skipped += 1
    write_tasks(args.tasks, tasks)
    if args.keys:
        write_keys(args.keys, tasks)
    _emit(
        {
            "tasks": args.tasks,
            "keys": args.keys,
            "written": len(tasks),
            "skipped": skipped,
        },
        args.out,
    )
    return EXIT_OK


def _cmd_grade(args) -> int:
    keys = read_keys(args.keys)
    tasks = {task.task_id: task for task in read_tasks(args.tasks, keys)}
    results = []
    n_correct = 0
    for line in Path(args.answers).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        task = tasks.get(doc.get("task_id"))
        if task is None:
            raise UnknownTask(f"answer names unknown task {doc.get('task_id')!r}")
        verdict = grade_answer(task, doc.get("answer", ""))
        n_correct += verdict.passed
        results.append({"task_id": task.task_id, **verdict.to_doc()})
    _emit({"graded": len(results), "correct": n_correct, "results": results}, args.out)
    return EXIT_OK


def _cmd_replay(args) -> int:
    catalog = load_catalog(args.catalog) if args.catalog else None
    final_hash = replay_file(args.episode, catalog=catalog)
    _emit({"episode": args.episode, "final_hash": str(final_hash)}, args.out)
    return EXIT_OK


def _cmd_serve(args) -> int:
    from playroom.protocol import Service, run_stdio, serve

    catalog = _load_catalog_arg(args.catalog)
    if args.stdio:
        run_stdio(Service(session_limit=args.session_limit, catalog=catalog),
                  sys.stdin, sys.stdout)
        return EXIT_OK
    running = serve(args.bind, session_limit=args.session_limit, catalog=catalog)
    host, port = running.address
    print(json.dumps({"listening": f"{host}:{port}"}), flush=True)
    try:
        running.thread.join()
    except KeyboardInterrupt:
        running.shutdown()
    return EXIT_OK


def _cmd_dump_frames(args) -> int:
    scene = _build_scene(args)
    sim = Simulation(scene)
    cameras = default_cameras(scene.grid, resolution=_parse_resolution(args.resolution))
    schedule = capture_schedule(sim, args.every, cameras=cameras)
    written = 0
    for batch in schedule:
        for frame in batch:
            dump_frameset(frame, args.out_dir)
            written += 1
        if scene.tick >= args.ticks:
            break
    _emit({"directory": args.out_dir, "frames": written, "ticks": scene.tick}, args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="playroom",
        description="Deterministic playroom: scenes, lessons, tasks, episodes, serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--seed", type=int, default=0, help="scene seed (default 0)")
        p.add_argument("--catalog", default=None, help="catalog JSON path (default bundled)")
        p.add_argument("--out", default=None, help="write the JSON summary here instead of stdout")
        return p

    p = common(sub.add_parser("gen-scene", help="generate a scene and print its metadata"))
    p.add_argument("--grid", default=None, help="cells, WIDTHxDEPTH (default 10x10)")
    p.add_argument("--n-interactable", type=int, default=10, dest="n_interactable")
    p.set_defaults(func=_cmd_gen_scene)

    p = common(sub.add_parser("run-lesson", help="compile and act out one lesson"))
    p.add_argument("concept", help="concept id, e.g. on, put_in, red, only")
    p.add_argument("--level", type=int, default=2, help="speech level 0..2 (default 2)")
    p.add_argument("--grid", default=None)
    p.add_argument("--n-interactable", type=int, default=10, dest="n_interactable")
    p.add_argument("--episode", default=None, help="record the run to this JSONL file")
    p.add_argument("--dump-frames", default=None, dest="frames_dir",
                   help="write camera frames to this directory during the lesson")
    p.add_argument("--every", type=int, default=20, help="capture every N ticks")
    p.add_argument("--resolution", default=None, help="frame size WxH (default 64x64)")
    p.set_defaults(func=_cmd_run_lesson)

    p = common(sub.add_parser("gen-tasks", help="write task and key files"))
    p.add_argument("--kind", default="all",
                   choices=["qa", "fill_in_blank", "demonstrate", "all"])
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--grid", default=None)
    p.add_argument("--n-interactable", type=int, default=10, dest="n_interactable")
    p.add_argument("--tasks", default="tasks.jsonl")
    p.add_argument("--keys", default="keys.jsonl")
    p.set_defaults(func=_cmd_gen_tasks)

    p = common(sub.add_parser("grade", help="grade an answers file against keys"))
    p.add_argument("--tasks", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--answers", required=True,
                   help='JSONL lines of {"task_id", "answer"}')
    p.set_defaults(func=_cmd_grade)

    p = common(sub.add_parser("replay", help="re-run an episode and verify its hash"))
    p.add_argument("episode", help="episode JSONL path")
    p.set_defaults(func=_cmd_replay)

    p = common(sub.add_parser("serve", help="run the NDJSON protocol server"))
    p.add_argument("--bind", default="127.0.0.1:7661", help="host:port (default 127.0.0.1:7661)")
    p.add_argument("--session-limit", type=int, default=8, dest="session_limit")
    p.add_argument("--stdio", action="store_true", help="serve one connection on stdin/stdout")
    p.set_defaults(func=_cmd_serve)

    p = common(sub.add_parser("dump-frames", help="render a scene's cameras to disk"))
    p.add_argument("--grid", default=None)
    p.add_argument("--n-interactable", type=int, default=10, dest="n_interactable")
    p.add_argument("--ticks", type=int, default=100, help="simulate this many ticks")
    p.add_argument("--every", type=int, default=20, help="capture every N ticks")
    p.add_argument("--resolution", default=None, help="frame size WxH (default 64x64)")
    p.add_argument("--out-dir", default="frames", dest="out_dir")
    p.set_defaults(func=_cmd_dump_frames)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PlayroomError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"error [NotFound]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
