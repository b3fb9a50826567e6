"""Shared builders for tests: tiny scenes and stub backends."""

from __future__ import annotations

from dronescout.perception import NoiseModel, PerceptionReply
from dronescout.world import Box, CameraModel, Pose, Scene, SceneObject, Vec3

ZERO_NOISE = NoiseModel(0.0, 0.0, 0.0, seed=1)


def make_object(
    oid,
    label,
    attrs=(),
    center=(0.0, 0.0, 0.0),
    extent=(1.0, 1.0, 1.0),
    anomaly=False,
    occluder=False,
):
    return SceneObject(
        oid, label, tuple(attrs), Vec3(*center), Vec3(*extent), anomaly, occluder
    )


def make_scene(
    objects,
    spawn=(0.0, 0.0, 5.0),
    yaw=0.0,
    fov=90.0,
    max_range=200.0,
    name="test-scene",
    bounds=((-100.0, -100.0, 0.0), (300.0, 100.0, 50.0)),
):
    return Scene(
        name=name,
        bounds=Box(Vec3(*bounds[0]), Vec3(*bounds[1])),
        spawn=Pose(Vec3(*spawn), yaw),
        objects=tuple(objects),
        camera=CameraModel(fov, max_range),
    )


def tree_scene(**kwargs):
    """One plain tree 5 m directly ahead of the spawn."""
    return make_scene([make_object("tree1", "tree", center=(5.0, 0.0, 5.0))], **kwargs)


def fire_scene():
    """A burning fire close ahead plus a tree, for anomaly-path tests."""
    return make_scene(
        [
            make_object("blaze", "fire", ("burning",), center=(8.0, 0.0, 5.0), anomaly=True),
            make_object("tree1", "tree", ("tall",), center=(12.0, 3.0, 5.0)),
        ]
    )


class ScriptedTurns:
    """Controller stub replaying a fixed list of turn texts."""

    def __init__(self, turns, summary_text="description: d\ncaption: nothing notable"):
        self.turns = list(turns)
        self.summary_text = summary_text
        self.turn_calls = 0
        self.summary_calls = 0

    def next_turn(self, history):
        self.turn_calls += 1
        if not self.turns:
            return "command: i know enough"
        return self.turns.pop(0)

    def summary(self, history):
        self.summary_calls += 1
        return self.summary_text


class FixedPerception:
    """Perception stub answering from a function of (question_text, pose)."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def query(self, question_text, pose):
        self.calls += 1
        reply = self.fn(question_text, pose)
        if not isinstance(reply, PerceptionReply):
            answer, caption, score = reply
            reply = PerceptionReply(answer, caption, score)
        return reply
