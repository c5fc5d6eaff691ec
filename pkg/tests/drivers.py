"""Shared episode drivers: deterministic command streams for recording tests.

Both the module tests and the acceptance suite need "a random but
reproducible episode"; keeping the drivers here guarantees the two suites
exercise identical input distributions.
"""

from __future__ import annotations

from playroom.agents import ActionCommand, Simulation, Verb
from playroom.episode import EpisodeRecorder
from playroom.errors import PlayroomError
from playroom.rng import Rng
from playroom.world import LANE_META, generate_scene

# Verbs a blind driver can always attempt; target-bearing ones draw targets
# from the live scene and tolerate rejection.
_POINT_FREE = (
    Verb.WALK_FORWARD,
    Verb.WALK_BACKWARDS,
    Verb.TURN_LEFT,
    Verb.TURN_RIGHT,
    Verb.WANDER,
    Verb.LOOK_AROUND,
    Verb.PUT_BACK,
)


def _random_command(sim: Simulation, rng: Rng) -> ActionCommand:
    roll = rng.random()
    scene = sim.scene
    if roll < 0.25:
        x0, y0, x1, y1 = scene.grid.bounds()
        point = (x0 + rng.random() * (x1 - x0), y0 + rng.random() * (y1 - y0))
        return ActionCommand(Verb.NAVIGATE_TO, target=point)
    ids = [inst.instance_id for inst in scene.instances]
    if roll < 0.40:
        return ActionCommand(Verb.GRAB, target=ids[rng.randrange(len(ids))])
    if roll < 0.50:
        return ActionCommand(Verb.TOUCH, target=ids[rng.randrange(len(ids))])
    if roll < 0.55:
        return ActionCommand(Verb.ROTATE, target=ids[rng.randrange(len(ids))])
    verb = _POINT_FREE[rng.randrange(len(_POINT_FREE))]
    if verb in (Verb.WALK_FORWARD, Verb.WALK_BACKWARDS):
        return ActionCommand(verb, duration_ticks=1 + rng.randrange(30))
    return ActionCommand(verb)


def random_episode(catalog, seed: int, ticks: int = 120):
    """Record ``ticks`` ticks of random-but-reproducible two-agent behavior."""
    scene = generate_scene(catalog, seed=seed)
    sim = Simulation(scene)
    recorder = EpisodeRecorder(sim)
    rng = Rng(seed).derive("episode-driver")
    while scene.tick < ticks:
        for agent_id in ("child", "parent"):
            if rng.random() < 0.15:
                try:
                    sim.begin_action(agent_id, _random_command(sim, rng))
                except PlayroomError:
                    pass  # rejected commands leave no trace; that is the point
        if rng.random() < 0.02:
            scene.emit("note", {"tick": scene.tick}, lane=LANE_META)
        sim.tick()
    return sim, recorder.finish()
