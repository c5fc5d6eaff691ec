"""Episode recording, file format, and exact replay tests."""

from __future__ import annotations

import json

import pytest

from playroom.agents import ActionCommand, Simulation, Verb
from playroom.episode import (
    EPISODE_FORMAT,
    EpisodeRecord,
    EpisodeRecorder,
    agent_pose_doc,
    parse_episode,
    read_episode,
    replay_episode,
    replay_file,
    state_hash,
)
from playroom.errors import CorruptEpisode, HashMismatch
from playroom.lessons import compile_lesson, ensure_concept_objects, run_lesson
from playroom.rng import Rng
from playroom.world import LANE_CHILD, LANE_META, LANE_PARENT, generate_scene

from drivers import random_episode


def _lesson_episode(catalog, seed: int = 5):
    scene = generate_scene(catalog, seed=seed)
    ensure_concept_objects(scene, "put_in")
    sim = Simulation(scene)
    recorder = EpisodeRecorder(sim)
    script = compile_lesson(scene, "put_in", 2, Rng(seed).derive("lesson/put_in/l2"))
    outcome = run_lesson(sim, script)
    assert outcome.success, outcome.reason
    sim.step_idle(3)
    return sim, recorder.finish()


# -- state hashing -----------------------------------------------------------------


def test_agent_pose_doc_fields(catalog):
    sim = Simulation(generate_scene(catalog, seed=0))
    doc = agent_pose_doc(sim.agents["child"])
    assert set(doc) == {
        "agent_id", "position", "heading", "posture", "held", "gaze", "pointing_at",
    }
    assert doc["agent_id"] == "child"
    assert doc["posture"] == "standing"


def test_state_hash_tracks_agent_pose(catalog):
    sim = Simulation(generate_scene(catalog, seed=0))
    child = sim.agents["child"]
    base = state_hash(sim)
    origin = child.position
    child.position = (origin[0] + 0.5, origin[1])
    moved = state_hash(sim)
    assert moved != base
    child.position = origin
    assert state_hash(sim) == base
    child.heading += 0.25
    assert state_hash(sim) not in (base, moved)


# -- record shape ------------------------------------------------------------------


def test_header_and_footer_fields(catalog):
    _, record = _lesson_episode(catalog)
    assert set(record.header) == {
        "type", "format", "seed", "catalog_version", "grid",
        "n_interactable", "start_tick", "start_time", "start_hash",
    }
    assert record.header["format"] == EPISODE_FORMAT
    assert record.header["start_tick"] == 0
    assert set(record.footer) == {"type", "final_tick", "final_hash", "tick_hashes"}
    assert len(record.footer["tick_hashes"]) == record.footer["final_tick"]
    for doc in record.events:
        assert set(doc) == {"type", "tick", "seq", "lane", "kind", "payload"}


def test_events_sorted_by_tick_lane_seq(catalog):
    scene = generate_scene(catalog, seed=0)
    sim = Simulation(scene)
    recorder = EpisodeRecorder(sim)
    # Parent speaks first in the raw log, but the file orders lanes per tick.
    sim.begin_action("parent", ActionCommand(Verb.TURN_LEFT))
    sim.begin_action("child", ActionCommand(Verb.TURN_LEFT))
    sim.run_until_idle()
    record = recorder.finish()
    keys = [(doc["tick"], doc["lane"], doc["seq"]) for doc in record.events]
    assert keys == sorted(keys)
    first_tick = [doc for doc in record.events if doc["tick"] == 0]
    assert [doc["lane"] for doc in first_tick] == [LANE_CHILD, LANE_PARENT]
    assert first_tick[0]["seq"] > first_tick[1]["seq"]  # emitted parent-first


def test_write_read_round_trip(catalog, tmp_path):
    _, record = _lesson_episode(catalog)
    path = tmp_path / "episode.jsonl"
    record.write(path)
    assert read_episode(path) == record


# -- determinism ------------------------------------------------------------------


def test_identical_runs_identical_bytes(catalog):
    _, first = _lesson_episode(catalog)
    _, second = _lesson_episode(catalog)
    assert first.to_lines() == second.to_lines()
    _, third = random_episode(catalog, seed=21)
    _, fourth = random_episode(catalog, seed=21)
    assert third.to_lines() == fourth.to_lines()
    _, other = random_episode(catalog, seed=22)
    assert other.to_lines() != third.to_lines()


def test_replay_reproduces_log_bytes(catalog):
    for make in (_lesson_episode, lambda c: random_episode(c, seed=33)):
        _, record = make(catalog)
        final_hash, _, replayed = replay_episode(record)
        assert final_hash == record.footer["final_hash"]
        assert replayed.to_lines() == record.to_lines()


def test_replay_file_returns_final_hash(catalog, tmp_path):
    _, record = _lesson_episode(catalog)
    path = tmp_path / "episode.jsonl"
    record.write(path)
    assert replay_file(path) == record.footer["final_hash"]


def test_meta_events_survive_replay_verbatim(catalog):
    _, record = random_episode(catalog, seed=33)
    notes = [doc for doc in record.events if doc["lane"] == LANE_META]
    assert notes, "driver should have emitted meta notes"
    _, _, replayed = replay_episode(record)
    assert [d for d in replayed.events if d["lane"] == LANE_META] == notes


# -- tamper detection ---------------------------------------------------------------


def test_tampered_tick_hash_pins_divergence(catalog):
    _, record = _lesson_episode(catalog)
    hashes = list(record.footer["tick_hashes"])
    hashes[10] ^= 1
    tampered = EpisodeRecord(
        header=record.header,
        events=record.events,
        footer={**record.footer, "tick_hashes": hashes},
    )
    with pytest.raises(HashMismatch) as excinfo:
        replay_episode(tampered)
    assert excinfo.value.divergent_tick == record.header["start_tick"] + 11


def test_tampered_command_detected(catalog):
    _, record = random_episode(catalog, seed=33)
    events = list(record.events)
    idx, doc = next(
        (i, d) for i, d in enumerate(events)
        if d["kind"] == "command" and d["payload"]["command"]["verb"] == "NavigateTo"
        and isinstance(d["payload"]["command"]["target"], list)
    )
    command = dict(doc["payload"]["command"])
    command["target"] = [command["target"][0] + 0.4, command["target"][1]]
    events[idx] = {**doc, "payload": {**doc["payload"], "command": command}}
    with pytest.raises(HashMismatch) as excinfo:
        replay_episode(EpisodeRecord(record.header, tuple(events), record.footer))
    assert isinstance(excinfo.value.divergent_tick, int)
    assert excinfo.value.divergent_tick > doc["tick"]


def test_tampered_header_detected(catalog):
    _, record = _lesson_episode(catalog)
    bad = EpisodeRecord(
        header={**record.header, "start_hash": record.header["start_hash"] ^ 1},
        events=record.events,
        footer=record.footer,
    )
    with pytest.raises(HashMismatch):
        replay_episode(bad)


def test_event_beyond_recorded_range_rejected(catalog):
    _, record = _lesson_episode(catalog)
    stray = {
        "type": "event",
        "tick": record.footer["final_tick"] + 5,
        "seq": 10 ** 6,
        "lane": LANE_CHILD,
        "kind": "command",
        "payload": {"agent": "child", "command": {"verb": "TurnLeft", "target": None,
                                                  "duration_ticks": None}},
    }
    bad = EpisodeRecord(record.header, (*record.events, stray), record.footer)
    with pytest.raises(CorruptEpisode):
        replay_episode(bad)


# -- corruption on disk --------------------------------------------------------------


def test_parse_rejects_truncation(catalog):
    _, record = _lesson_episode(catalog)
    lines = record.to_lines()
    with pytest.raises(CorruptEpisode):
        parse_episode(lines[:-1])  # footer gone
    with pytest.raises(CorruptEpisode):
        parse_episode(lines[:1])
    with pytest.raises(CorruptEpisode):
        parse_episode([])


def test_parse_rejects_bad_json_and_fields(catalog):
    _, record = _lesson_episode(catalog)
    lines = record.to_lines()

    broken = list(lines)
    broken[1] = '{"type": "event", '
    with pytest.raises(CorruptEpisode):
        parse_episode(broken)

    header = json.loads(lines[0])
    del header["seed"]
    with pytest.raises(CorruptEpisode):
        parse_episode([json.dumps(header), *lines[1:]])

    header = json.loads(lines[0])
    header["format"] = "somebody-elses-format"
    with pytest.raises(CorruptEpisode):
        parse_episode([json.dumps(header), *lines[1:]])

    footer = json.loads(lines[-1])
    footer["tick_hashes"] = footer["tick_hashes"][:-2]
    with pytest.raises(CorruptEpisode):
        parse_episode([*lines[:-1], json.dumps(footer)])


def test_parse_rejects_shuffled_events(catalog):
    _, record = _lesson_episode(catalog)
    lines = record.to_lines()
    assert len(lines) > 6
    lines[1], lines[5] = lines[5], lines[1]
    with pytest.raises(CorruptEpisode):
        parse_episode(lines)


def test_parse_rejects_missing_file(tmp_path):
    with pytest.raises(CorruptEpisode):
        read_episode(tmp_path / "nope.jsonl")
