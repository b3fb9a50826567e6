"""Synthetic perception model.

Stands in for a vision-language question-answering model: given a pose and a
question it produces an answer, a template caption, a caption-image matching
score and a salience grid, all derived from scene geometry plus a calibrated
noise model.  Detection degrades with distance and occlusion; a small
hallucination rate injects spurious facts.  Everything is deterministic
given the scene, the query, the noise parameters and the RNG stream.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .facts import (
    Fact,
    FactParseError,
    fact_matches_tokens,
    parse_fact_phrase,
    render_caption,
    verify_fact,
)
from .grammar import Question, QuestionKind, parse_question
from .world import Pose, Scene, SceneObject, Visibility, visible_objects

CAPTION_FACT_CAP = 4
DEFAULT_GRID_DIMS = (24, 24)  # (width, height)
SALIENCE_BLOB_SIGMA = 1.5  # cells

# Plausible-but-unchecked facts a noisy captioner may invent.  Mundane only:
# hazard tokens are excluded so that a spurious caption can degrade the match
# score but never spoof the anomaly early-stop.
HALLUCINATION_LEXICON = (
    Fact("bird"),
    Fact("rock"),
    Fact("puddle"),
    Fact("shadow"),
    Fact("crate"),
    Fact("cloud", ("grey",)),
)


@dataclass(frozen=True)
class NoiseModel:
    """Miss and hallucination parameters for the synthetic perception model.

    The probability of missing a visible object is
    ``min(1, miss_base + miss_per_meter * distance * (1 - fraction / 2))``,
    so far and heavily occluded objects are missed more often.
    """

    miss_base: float = 0.0
    miss_per_meter: float = 0.0
    hallucination_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("miss_base", "hallucination_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.miss_per_meter < 0.0:
            raise ValueError("miss_per_meter must be nonnegative")

    def miss_probability(self, distance: float, fraction: float) -> float:
        raw = self.miss_base + self.miss_per_meter * distance * (1.0 - fraction * 0.5)
        return min(1.0, raw)


@dataclass(frozen=True)
class ViewQuery:
    pose: Pose
    question: Question


@dataclass(frozen=True)
class SalienceGrid:
    width: int
    height: int
    values: tuple[float, ...]  # row-major, in [0, 1]

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be >= 1")
        if len(self.values) != self.width * self.height:
            raise ValueError("values length must be width * height")

    def at(self, row: int, col: int) -> float:
        return self.values[row * self.width + col]


@dataclass(frozen=True)
class PerceptionResult:
    answer: str
    caption: str
    caption_facts: tuple[Fact, ...]
    match_score: float
    salience: SalienceGrid
    answer_fact: Optional[Fact] = None  # structured form of a presence answer


@dataclass(frozen=True)
class PerceptionReply:
    """The transport-level view of a perception result.

    Engines consume only (answer, caption, match_score) so in-process and
    remote perception backends are interchangeable; facts are re-parsed from
    the caption text.
    """

    answer: str
    caption: str
    match_score: float


def match_score(
    caption_facts: Sequence[Fact], ground_visible: Sequence[Visibility], scene: Scene
) -> float:
    """Fraction of caption facts verifiable against the truly visible objects.

    Attributes must be covered and polarity respected; an empty caption
    scores 0 by convention.
    """
    if not caption_facts:
        return 0.0
    by_id = {obj.id: obj for obj in scene.objects}
    seen = [by_id[v.object_id] for v in ground_visible if v.fraction > 0.0]
    verifiable = sum(1 for fact in caption_facts if verify_fact(fact, seen))
    return verifiable / len(caption_facts)


def _dedupe(facts: Sequence[Fact]) -> list[Fact]:
    out: list[Fact] = []
    for fact in facts:
        if fact not in out:
            out.append(fact)
    return out


def query(
    scene: Scene, vq: ViewQuery, noise: NoiseModel, rng: random.Random
) -> PerceptionResult:
    """Answer a question about the view from a pose.

    Draw order is fixed for determinism: one uniform miss trial per visible
    object (in visibility order), then one uniform hallucination trial, then,
    if it fires, one index draw into the hallucination lexicon.
    """
    if not scene.bounds.contains(vq.pose.position):
        raise ValueError("query pose outside scene bounds")
    visible = [v for v in visible_objects(scene, vq.pose) if v.fraction > 0.0]
    by_id = {obj.id: obj for obj in scene.objects}

    detected: list[tuple[SceneObject, Visibility]] = []
    for vis in visible:
        miss = noise.miss_probability(vis.distance, vis.fraction)
        if rng.random() >= miss:
            detected.append((by_id[vis.object_id], vis))

    facts = _dedupe(
        [Fact(obj.label, obj.attributes) for obj, _ in detected]
    )[:CAPTION_FACT_CAP]
    if rng.random() < noise.hallucination_rate:
        spurious = HALLUCINATION_LEXICON[rng.randrange(len(HALLUCINATION_LEXICON))]
        if spurious not in facts:
            facts.append(spurious)
    caption_facts = tuple(facts)

    caption = render_caption(caption_facts)
    answer, answer_fact = _answer(vq.question, caption, caption_facts, detected)
    score = match_score(caption_facts, visible, scene)
    salience = render_salience(
        scene, vq.pose, [f for f in caption_facts if f.present], DEFAULT_GRID_DIMS
    )
    return PerceptionResult(answer, caption, caption_facts, score, salience, answer_fact)


def _answer(
    question: Question,
    caption: str,
    caption_facts: Sequence[Fact],
    detected: Sequence[tuple[SceneObject, Visibility]],
) -> tuple[str, Optional[Fact]]:
    if question.kind is QuestionKind.OPEN:
        return caption, None
    tokens = question.subject.split()
    if question.kind is QuestionKind.PRESENCE:
        hit = any(
            fact.present and fact_matches_tokens(fact, tokens) for fact in caption_facts
        )
        try:
            parsed = parse_fact_phrase(question.subject)
            fact = Fact(parsed.label, parsed.attributes, present=hit)
        except FactParseError:
            fact = None
        return ("yes" if hit else "no"), fact
    if question.kind is QuestionKind.COUNT:
        count = sum(
            1
            for obj, _ in detected
            if set(tokens) <= set(obj.attributes) | {obj.label}
        )
        return str(count), None
    # attribute question: report the attributes of the first matching detection
    for obj, _ in detected:
        if obj.label == tokens[-1]:
            return (", ".join(obj.attributes) if obj.attributes else "plain"), None
    return "unknown", None


def render_salience(
    scene: Scene, pose: Pose, target_facts: Sequence[Fact], dims: tuple[int, int]
) -> SalienceGrid:
    """Project detected objects matching the target facts into a salience grid.

    Column follows the horizontal bearing (leftmost column = left FOV edge),
    row grows with distance.  Each match deposits a Gaussian blob whose peak
    equals the object's visibility fraction; cells are clamped to [0, 1].
    """
    width, height = dims
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be >= 1")
    cells = [0.0] * (width * height)
    present_targets = [f for f in target_facts if f.present]
    if present_targets:
        half_fov = math.radians(scene.camera.horizontal_fov) / 2.0
        by_id = {obj.id: obj for obj in scene.objects}
        for vis in visible_objects(scene, pose):
            if vis.fraction <= 0.0:
                continue
            obj = by_id[vis.object_id]
            matched = any(
                obj.label == f.label and set(f.attributes) <= set(obj.attributes)
                for f in present_targets
            )
            if not matched:
                continue
            dx = obj.center.x - pose.position.x
            dy = obj.center.y - pose.position.y
            bearing = (math.atan2(dy, dx) - pose.yaw + math.pi) % (2 * math.pi) - math.pi
            col_f = (0.5 - bearing / (2.0 * half_fov)) * (width - 1)
            row_f = min(vis.distance / scene.camera.max_range, 1.0) * (height - 1)
            sigma2 = 2.0 * SALIENCE_BLOB_SIGMA**2
            for row in range(height):
                for col in range(width):
                    d2 = (row - row_f) ** 2 + (col - col_f) ** 2
                    cells[row * width + col] += vis.fraction * math.exp(-d2 / sigma2)
    values = tuple(min(1.0, max(0.0, v)) for v in cells)
    return SalienceGrid(width, height, values)


def save_salience_pgm(grid: SalienceGrid, path) -> None:
    """Write a grid as plain-text PGM (P2), 8-bit."""
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    for row in range(grid.height):
        lines.append(
            " ".join(
                str(round(grid.at(row, col) * 255)) for col in range(grid.width)
            )
        )
    with open(path, "w", encoding="ascii") as handle:
        handle.write("\n".join(lines) + "\n")


class SyntheticPerception:
    """In-process perception backend bound to one scene and one RNG stream."""

    def __init__(self, scene: Scene, noise: NoiseModel):
        self.scene = scene
        self.noise = noise
        self._rng = random.Random(noise.seed)

    def query(self, question_text: str, pose: Pose) -> PerceptionReply:
        result = query(
            self.scene, ViewQuery(pose, parse_question(question_text)), self.noise, self._rng
        )
        return PerceptionReply(result.answer, result.caption, result.match_score)
