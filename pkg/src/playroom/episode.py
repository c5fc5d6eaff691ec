"""Episode recording and exact replay.

An episode file is JSONL: one header line, one line per event, one footer
line.  The header carries everything needed to rebuild the starting room
(seed, catalog version, grid, interactable count); the footer carries the
final scene hash plus one state hash per tick so a divergence can be pinned
to the first tick at which it appears.

Replay rebuilds the room from the header, re-applies only the *input*
events (commands, cues, spawns, teleports, interrupts) at their recorded
ticks, and lets the simulation regenerate everything else.  Because every
per-tick mutation is a pure function of (scene state, command stream), a
faithful replay reproduces the event log byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from playroom.agents import TICK_DT, ActionCommand, Simulation
from playroom.catalog import Catalog, default_catalog
from playroom.errors import CorruptEpisode, HashMismatch, PlayroomError
from playroom.hashing import fnv1a_64
from playroom.world import (
    LANE_META,
    GridSpec,
    Scene,
    canonical_json,
    generate_scene,
    scene_hash,
    scene_metadata,
    spawn_object,
    teleport_instance,
)

EPISODE_FORMAT = "playroom-episode-v1"

# Event kinds that drive state; everything else is regenerated on replay.
INPUT_KINDS = frozenset({"command", "cue", "spawn", "teleport", "interrupt"})


def agent_pose_doc(agent) -> dict:
    """Plain document for one avatar's pose; feeds state hashing and GetScene."""
    return {
        "agent_id": agent.agent_id,
        "position": [agent.position[0], agent.position[1]],
        "heading": agent.heading,
        "posture": agent.posture.value,
        "held": agent.held,
        "gaze": agent.gaze,
        "pointing_at": agent.pointing_at,
    }


def state_hash(sim: Simulation) -> int:
    """64-bit hash of the full mutable state: scene plus both avatar poses."""
    doc = {
        "scene": scene_metadata(sim.scene),
        "agents": [agent_pose_doc(agent) for _, agent in sorted(sim.agents.items())],
    }
    return fnv1a_64(canonical_json(doc))


@dataclass(frozen=True)
class EpisodeRecord:
    """A parsed episode file: header doc, event docs, footer doc."""

    header: dict
    events: tuple[dict, ...]
    footer: dict

    def to_lines(self) -> list[str]:
        docs = [self.header, *self.events, self.footer]
        return [canonical_json(doc).decode("utf-8") for doc in docs]

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")


class EpisodeRecorder:
    """Attach to a simulation before staging; everything after is captured.

    The recorder snapshots the event log position and the starting hash at
    construction, appends one state hash per tick, and emits a complete
    :class:`EpisodeRecord` on :meth:`finish`.
    """

    def __init__(self, sim: Simulation):
        self.sim = sim
        self._start_index = len(sim.scene.events)
        self.start_tick = sim.scene.tick
        self.start_hash = state_hash(sim)
        self.tick_hashes: list[int] = []
        sim.tick_hooks.append(self._after_tick)

    def _after_tick(self) -> None:
        self.tick_hashes.append(state_hash(self.sim))

    def detach(self) -> None:
        if self._after_tick in self.sim.tick_hooks:
            self.sim.tick_hooks.remove(self._after_tick)

    def header(self) -> dict:
        scene = self.sim.scene
        return {
            "type": "header",
            "format": EPISODE_FORMAT,
            "seed": scene.seed,
            "catalog_version": scene.catalog.version,
            "grid": {
                "width_cells": scene.grid.width_cells,
                "depth_cells": scene.grid.depth_cells,
                "cell_size": scene.grid.cell_size,
                "origin": list(scene.grid.origin),
            },
            "n_interactable": scene.n_interactable,
            "start_tick": self.start_tick,
            "start_time": self.start_tick * TICK_DT,
            "start_hash": self.start_hash,
        }

    def finish(self) -> EpisodeRecord:
        """Freeze the recording into a record (the recorder stays attached)."""
        scene = self.sim.scene
        events = sorted(
            scene.events[self._start_index:],
            key=lambda ev: (ev.tick, ev.lane, ev.seq),
        )
        footer = {
            "type": "footer",
            "final_tick": scene.tick,
            "final_hash": scene_hash(scene),
            "tick_hashes": list(self.tick_hashes),
        }
        event_docs = tuple({"type": "event", **ev.to_doc()} for ev in events)
        return EpisodeRecord(header=self.header(), events=event_docs, footer=footer)


_HEADER_FIELDS = {
    "type", "format", "seed", "catalog_version", "grid",
    "n_interactable", "start_tick", "start_time", "start_hash",
}
_FOOTER_FIELDS = {"type", "final_tick", "final_hash", "tick_hashes"}
_EVENT_FIELDS = {"type", "tick", "seq", "lane", "kind", "payload"}


def _parse_line(text: str, lineno: int) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptEpisode(f"line {lineno}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("type"), str):
        raise CorruptEpisode(f"line {lineno}: expected a typed object")
    return doc


def parse_episode(lines: list[str]) -> EpisodeRecord:
    """Validate raw JSONL lines into an :class:`EpisodeRecord`.

    Raises:
        CorruptEpisode: truncation, bad JSON, wrong line types, missing
            fields, or events out of (tick, lane, seq) order.
    """
    stripped = [line for line in (ln.strip() for ln in lines) if line]
    if len(stripped) < 2:
        raise CorruptEpisode("episode needs at least a header and a footer")
    docs = [_parse_line(text, i + 1) for i, text in enumerate(stripped)]
    header, *middle, footer = docs
    if header.get("type") != "header":
        raise CorruptEpisode("first line must be the header")
    if header.get("format") != EPISODE_FORMAT:
        raise CorruptEpisode(f"unknown episode format {header.get('format')!r}")
    if set(header) != _HEADER_FIELDS:
        raise CorruptEpisode("header fields do not match the format")
    if footer.get("type") != "footer":
        raise CorruptEpisode("last line must be the footer (file truncated?)")
    if set(footer) != _FOOTER_FIELDS or not isinstance(footer["tick_hashes"], list):
        raise CorruptEpisode("footer fields do not match the format")
    for doc in middle:
        if doc.get("type") != "event" or set(doc) != _EVENT_FIELDS:
            raise CorruptEpisode("middle lines must be events")
    order = [(doc["tick"], doc["lane"], doc["seq"]) for doc in middle]
    if order != sorted(order):
        raise CorruptEpisode("events are not sorted by (tick, lane, seq)")
    span = footer["final_tick"] - header["start_tick"]
    if len(footer["tick_hashes"]) != span:
        raise CorruptEpisode(
            f"expected {span} tick hashes, found {len(footer['tick_hashes'])}"
        )
    return EpisodeRecord(header=header, events=tuple(middle), footer=footer)


def read_episode(path: str | Path) -> EpisodeRecord:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorruptEpisode(f"cannot read episode: {exc}") from exc
    return parse_episode(text.splitlines())


def _rebuild(record: EpisodeRecord, catalog: Catalog | None) -> Scene:
    header = record.header
    catalog = catalog or default_catalog()
    if catalog.version != header["catalog_version"]:
        raise CorruptEpisode(
            f"episode was recorded against catalog {header['catalog_version']!r},"
            f" not {catalog.version!r}"
        )
    grid_doc = header["grid"]
    grid = GridSpec(
        width_cells=grid_doc["width_cells"],
        depth_cells=grid_doc["depth_cells"],
        cell_size=grid_doc["cell_size"],
        origin=tuple(grid_doc["origin"]),
    )
    return generate_scene(
        catalog,
        grid=grid,
        n_interactable=header["n_interactable"],
        seed=header["seed"],
    )


def _apply_input(sim: Simulation, doc: dict) -> None:
    kind, payload = doc["kind"], doc["payload"]
    if doc["lane"] == LANE_META:
        # Meta events are annotations written by code outside the simulation
        # (lesson markers, verdicts); re-emit them verbatim so the replayed
        # log matches the original byte for byte.
        sim.scene.emit(kind, payload, lane=LANE_META)
        return
    try:
        if kind == "command":
            sim.begin_action(payload["agent"], ActionCommand.from_doc(payload["command"]))
        elif kind == "cue":
            sim.apply_cue(payload["actor"], payload["op"], **payload["params"])
        elif kind == "spawn":
            cls = sim.scene.catalog.get(payload["class_id"])
            spawn_object(sim.scene, cls, tuple(payload["cell"]))
        elif kind == "teleport":
            teleport_instance(
                sim.scene, payload["instance_id"],
                tuple(payload["position"]), yaw=payload["yaw"],
            )
        elif kind == "interrupt":
            sim.cancel_action(payload["agent"])
    except PlayroomError:
        # The original run hit the same deterministic rejection; state is
        # untouched either way, so the replay stays aligned.
        pass


def replay_episode(
    record: EpisodeRecord, catalog: Catalog | None = None
) -> tuple[int, Simulation, EpisodeRecord]:
    """Re-run a recorded episode and verify it tick by tick.

    Returns the verified final scene hash, the replayed simulation, and the
    episode record produced *by the replay itself* (equal to the input when
    the recording started from a freshly built simulation).

    Raises:
        HashMismatch: state diverges; ``divergent_tick`` is the first tick
            whose hash differs from the recording.
        CorruptEpisode: the record cannot drive a rebuild (wrong catalog,
            events outside the recorded tick range).
    """
    scene = _rebuild(record, catalog)
    sim = Simulation(scene)
    recorder = EpisodeRecorder(sim)
    if scene.tick != record.header["start_tick"] or (
        recorder.start_hash != record.header["start_hash"]
    ):
        raise HashMismatch(
            "rebuilt starting state does not match the header",
            divergent_tick=record.header["start_tick"],
        )
    inputs = [
        doc for doc in record.events
        if doc["lane"] == LANE_META or doc["kind"] in INPUT_KINDS
    ]
    inputs.sort(key=lambda doc: (doc["tick"], doc["seq"]))
    index = 0
    for expected in record.footer["tick_hashes"]:
        now = scene.tick
        while index < len(inputs) and inputs[index]["tick"] == now:
            _apply_input(sim, inputs[index])
            index += 1
        sim.tick()
        if recorder.tick_hashes[-1] != expected:
            raise HashMismatch(
                f"replay diverged at tick {scene.tick}", divergent_tick=scene.tick
            )
    # Inputs recorded after the last tick (closing cues) still apply.
    while index < len(inputs) and inputs[index]["tick"] == scene.tick:
        _apply_input(sim, inputs[index])
        index += 1
    if index < len(inputs):
        raise CorruptEpisode(
            f"event at tick {inputs[index]['tick']} is outside the recorded range"
        )
    final_hash = scene_hash(scene)
    if final_hash != record.footer["final_hash"]:
        raise HashMismatch(
            "final scene hash does not match the footer",
            divergent_tick=record.footer["final_tick"],
        )
    return final_hash, sim, recorder.finish()


def replay_file(path: str | Path, catalog: Catalog | None = None) -> int:
    """Read, replay, and verify an episode file; returns the final hash."""
    final_hash, _, _ = replay_episode(read_episode(path), catalog)
    return final_hash
