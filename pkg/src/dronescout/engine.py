"""Three-mode dialogue engine.

One episode runs active perception (controller commands and questions, a
fact ledger of caption claims), then validation (revisit saved positions
under Gaussian perturbation and majority-vote each targeted fact), then
explanation (salience grids for the best question-view pairs), and ends
with a final description, caption and safety notes.

The engine talks to two backends through a minimal text interface
(``controller.next_turn(history) -> str``, ``controller.summary(history) ->
str`` and ``perception.query(question_text, pose) -> PerceptionReply``), so
scripted in-process backends and remote ones behind the wire protocol are
interchangeable and produce identical transcripts.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .facts import Fact, is_anomalous, parse_caption
from .grammar import (
    Command,
    GrammarError,
    MOVE_COMMANDS,
    Question,
    TurnDirective,
    parse_summary,
    parse_turn,
)
from .perception import (
    DEFAULT_GRID_DIMS,
    PerceptionReply,
    SalienceGrid,
    render_salience,
)
from .policy import compose_final
from .seeding import derive_rng
from .world import Pose, Scene, apply_move, perturb_pose

BOOTSTRAP_QUESTION = "What do you see?"


class Mode(enum.Enum):
    ACTIVE_PERCEPTION = 0
    VALIDATION = 1
    EXPLANATION = 2
    DONE = 3

    @property
    def label(self) -> str:
        return self.name.lower()


class ControllerBackend(Protocol):
    def next_turn(self, history: Sequence["HistoryEntry"]) -> str: ...

    def summary(self, history: Sequence["HistoryEntry"]) -> str: ...


class PerceptionBackend(Protocol):
    def query(self, question_text: str, pose: Pose) -> PerceptionReply: ...


@dataclass(frozen=True)
class Backends:
    controller: ControllerBackend
    perception: PerceptionBackend


class EpisodeError(RuntimeError):
    """Backend failure, carrying the active-step index where it happened."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


class EpisodeAbort(EpisodeError):
    """Unrecoverable controller output after the one allowed retry."""


@dataclass(frozen=True)
class HistoryEntry:
    role: str  # "engine" | "controller"
    text: str


@dataclass
class LedgerEntry:
    fact: Fact
    source_step: int
    status: str = "candidate"  # candidate | confirmed | refuted
    votes_for: int = 0
    votes_against: int = 0


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 24
    sigma: float = 1.0
    validation_samples: int = 3
    early_stop: bool = True
    anomaly_lexicon: tuple[str, ...] = (
        "fire",
        "smoke",
        "flame",
        "crash",
        "crashed",
        "burning",
    )
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.validation_samples < 1 or self.validation_samples % 2 == 0:
            raise ValueError("validation_samples must be odd and >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass
class TurnRecord:
    step: int
    mode: str
    directive_text: str
    answer: str
    caption: str
    match_score: Optional[float]
    pose: tuple[float, float, float, float]  # x, y, z, yaw
    flags: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "mode": self.mode,
                "directive_text": self.directive_text,
                "answer": self.answer,
                "caption": self.caption,
                "match_score": self.match_score,
                "pose": list(self.pose),
                "flags": self.flags,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class BestPair:
    question: str
    pose: Pose
    match_score: float
    fact: Fact


@dataclass
class EpisodeState:
    scene: Scene
    config: EpisodeConfig
    mode: Mode
    pose: Pose
    saved: list[Pose] = field(default_factory=list)
    ledger: list[LedgerEntry] = field(default_factory=list)
    transcript: list[TurnRecord] = field(default_factory=list)
    history: list[HistoryEntry] = field(default_factory=list)
    step: int = 0  # controller turns taken in active perception
    anomaly_flag: bool = False
    best_pairs: list[BestPair] = field(default_factory=list)
    spawn_score: float = 0.0
    validation_scores: list[float] = field(default_factory=list)
    total_queries: int = 0


@dataclass(frozen=True)
class EpisodeMetrics:
    spawn_score: float
    validation_scores: tuple[float, ...]
    active_steps: int
    total_queries: int
    anomaly_detected: bool

    @property
    def match_scores(self) -> tuple[float, ...]:
        return (self.spawn_score,) + self.validation_scores


@dataclass(frozen=True)
class EpisodeReport:
    final_description: str
    final_caption: str
    safety_notes: tuple[str, ...]
    confirmed_facts: tuple[Fact, ...]
    explanation_pairs: tuple[tuple[str, SalienceGrid], ...]
    metrics: EpisodeMetrics


def _pose_tuple(pose: Pose) -> tuple[float, float, float, float]:
    return (pose.position.x, pose.position.y, pose.position.z, pose.yaw)


def _engine_result_message(question_text: str, reply: PerceptionReply) -> str:
    return (
        f"question: {question_text}\n"
        f"answer: {reply.answer}\n"
        f"caption: {reply.caption}\n"
        f"match score: {reply.match_score!r}"
    )


def _query(state: EpisodeState, backends: Backends, question_text: str) -> PerceptionReply:
    try:
        reply = backends.perception.query(question_text, state.pose)
    except Exception as exc:
        raise EpisodeError(f"perception backend failed: {exc}", state.step) from exc
    state.total_queries += 1
    return reply


def _merge_facts(state: EpisodeState, facts: Sequence[Fact]) -> list[Fact]:
    """Add unseen facts to the ledger as candidates; return the new ones."""
    known = {entry.fact for entry in state.ledger}
    new = []
    for fact in facts:
        if fact not in known:
            state.ledger.append(LedgerEntry(fact, state.step))
            known.add(fact)
            new.append(fact)
    return new


def _check_anomaly(state: EpisodeState, new_facts: Sequence[Fact]) -> bool:
    """Set the anomaly flag on hazard facts; return True if newly triggered."""
    hit = any(is_anomalous(f, state.config.anomaly_lexicon) for f in new_facts)
    if hit and not state.anomaly_flag:
        state.anomaly_flag = True
        return True
    if hit:
        return True
    return False


def _enter_validation(state: EpisodeState, sighting_save: bool = False) -> None:
    if sighting_save and (not state.saved or state.saved[-1] != state.pose):
        # Keep the pose the anomaly was seen from, so validation can revisit
        # a viewpoint from which the hazard is actually observable.
        state.saved.append(state.pose)
        if state.transcript:
            state.transcript[-1].flags["sighting_saved"] = True
    state.mode = Mode.VALIDATION


def start_episode(
    scene: Scene,
    config: EpisodeConfig,
    controller: ControllerBackend,
    perception: PerceptionBackend,
) -> EpisodeState:
    """Initialize an episode and run the bootstrap exchange at the spawn pose."""
    state = EpisodeState(
        scene=scene, config=config, mode=Mode.ACTIVE_PERCEPTION, pose=scene.spawn
    )
    backends = Backends(controller, perception)
    reply = _query(state, backends, BOOTSTRAP_QUESTION)
    state.spawn_score = reply.match_score
    facts = parse_caption(reply.caption)
    new_facts = _merge_facts(state, facts)
    anomaly_now = _check_anomaly(state, new_facts)
    state.transcript.append(
        TurnRecord(
            step=0,
            mode=state.mode.label,
            directive_text=f"question: {BOOTSTRAP_QUESTION}",
            answer=reply.answer,
            caption=reply.caption,
            match_score=reply.match_score,
            pose=_pose_tuple(state.pose),
            flags={"bootstrap": True, "anomaly": state.anomaly_flag},
        )
    )
    state.history.append(
        HistoryEntry("engine", _engine_result_message(BOOTSTRAP_QUESTION, reply))
    )
    if anomaly_now and config.early_stop:
        _enter_validation(state, sighting_save=True)
    return state


def _controller_turn(
    state: EpisodeState, backends: Backends
) -> tuple[TurnDirective, str]:
    """Get one parseable directive from the controller, retrying once."""
    for attempt in range(2):
        try:
            text = backends.controller.next_turn(state.history)
        except Exception as exc:
            raise EpisodeError(f"controller backend failed: {exc}", state.step) from exc
        try:
            directive = parse_turn(text)
        except GrammarError as exc:
            state.transcript.append(
                TurnRecord(
                    step=state.step,
                    mode=state.mode.label,
                    directive_text=text,
                    answer="",
                    caption="",
                    match_score=None,
                    pose=_pose_tuple(state.pose),
                    flags={"parse_error": exc.kind, "attempt": attempt + 1},
                )
            )
            state.history.append(HistoryEntry("controller", text))
            state.history.append(
                HistoryEntry(
                    "engine",
                    f"error: could not parse turn ({exc.kind}); "
                    "resend exactly one command line",
                )
            )
            if attempt == 1:
                raise EpisodeAbort(
                    f"controller turn unparseable after retry ({exc.kind})", state.step
                ) from exc
            continue
        state.history.append(HistoryEntry("controller", text))
        return directive, text
    raise AssertionError("unreachable")


def step_active(state: EpisodeState, backends: Backends) -> EpisodeState:
    """Run one controller turn of active perception."""
    if state.mode is not Mode.ACTIVE_PERCEPTION:
        raise ValueError("step_active requires active-perception mode")
    if state.step >= state.config.max_steps:
        raise ValueError("step budget already exhausted")
    directive, text = _controller_turn(state, backends)
    state.step += 1

    flags: dict = {}
    answer = caption = ""
    score: Optional[float] = None
    reply: Optional[PerceptionReply] = None

    if directive.command in MOVE_COMMANDS:
        state.pose, clamped = apply_move(
            state.pose, directive.command, state.scene.bounds
        )
        flags["clamped"] = clamped
        if directive.question is not None:
            reply = _query(state, backends, directive.question.raw)
        else:
            state.history.append(HistoryEntry("engine", "moved"))
    elif directive.command is Command.SAVE_POSITION:
        state.saved.append(state.pose)
        flags["saved"] = True
        state.history.append(HistoryEntry("engine", "position saved"))
    elif directive.command is Command.ASK_QUESTION:
        reply = _query(state, backends, directive.question.raw)
    elif directive.command is Command.I_KNOW_ENOUGH:
        flags["done_exploring"] = True
        state.history.append(HistoryEntry("engine", "returning to start"))

    anomaly_now = False
    if reply is not None:
        answer, caption, score = reply.answer, reply.caption, reply.match_score
        new_facts = _merge_facts(state, parse_caption(reply.caption))
        anomaly_now = _check_anomaly(state, new_facts)
        state.history.append(
            HistoryEntry("engine", _engine_result_message(directive.question.raw, reply))
        )
    flags["anomaly"] = state.anomaly_flag

    state.transcript.append(
        TurnRecord(
            step=state.step,
            mode=Mode.ACTIVE_PERCEPTION.label,
            directive_text=text,
            answer=answer,
            caption=caption,
            match_score=score,
            pose=_pose_tuple(state.pose),
            flags=flags,
        )
    )

    if anomaly_now and state.config.early_stop:
        _enter_validation(state, sighting_save=True)
    elif directive.command is Command.I_KNOW_ENOUGH:
        _enter_validation(state)
    elif state.step >= state.config.max_steps:
        _enter_validation(state)
    return state


def _ledger_entry_for(state: EpisodeState, fact: Fact) -> LedgerEntry:
    for entry in state.ledger:
        if entry.fact == fact:
            return entry
    entry = LedgerEntry(fact, state.step)
    state.ledger.append(entry)
    return entry


def run_validation(
    state: EpisodeState, backends: Backends, rng: random.Random
) -> EpisodeState:
    """Validate the controller's targets by perturbed revisits and majority vote.

    For every saved position and every target fact, ``validation_samples``
    perturbed poses are visited and one presence question is asked at each;
    a fact is confirmed when strictly more votes support it than oppose it.
    """
    if state.mode is not Mode.VALIDATION:
        raise ValueError("run_validation requires validation mode")
    try:
        summary_text = backends.controller.summary(state.history)
    except Exception as exc:
        raise EpisodeError(f"controller backend failed: {exc}", state.step) from exc
    try:
        summary = parse_summary(summary_text)
    except GrammarError as exc:
        raise EpisodeAbort(f"summary unparseable ({exc.kind})", state.step) from exc
    state.history.append(HistoryEntry("controller", summary_text))
    state.transcript.append(
        TurnRecord(
            step=state.step,
            mode=Mode.VALIDATION.label,
            directive_text=summary_text,
            answer="",
            caption="",
            match_score=None,
            pose=_pose_tuple(state.pose),
            flags={"summary": True},
        )
    )

    positions = list(state.saved) if state.saved else [state.scene.spawn]
    best: dict[Fact, BestPair] = {}
    entries = [_ledger_entry_for(state, fact) for fact in summary.validation_targets]

    for position in positions:
        for fact, entry in zip(summary.validation_targets, entries):
            question = Question.presence(" ".join(fact.tokens))
            for _ in range(state.config.validation_samples):
                probe_pose = perturb_pose(
                    position, state.config.sigma, rng, state.scene.bounds
                )
                state.pose = probe_pose
                reply = _query(state, backends, question.raw)
                supports = (reply.answer == "yes") == fact.present
                if supports:
                    entry.votes_for += 1
                else:
                    entry.votes_against += 1
                state.validation_scores.append(reply.match_score)
                pair = BestPair(question.raw, probe_pose, reply.match_score, fact)
                current = best.get(fact)
                if current is None or pair.match_score > current.match_score:
                    best[fact] = pair
                state.transcript.append(
                    TurnRecord(
                        step=state.step,
                        mode=Mode.VALIDATION.label,
                        directive_text=f"question: {question.raw}",
                        answer=reply.answer,
                        caption=reply.caption,
                        match_score=reply.match_score,
                        pose=_pose_tuple(probe_pose),
                        flags={"probe": True, "target": fact.phrase()},
                    )
                )

    for entry in entries:
        entry.status = (
            "confirmed" if entry.votes_for > entry.votes_against else "refuted"
        )
    ordered = sorted(
        best.values(), key=lambda p: (-p.match_score, p.fact.phrase())
    )
    state.best_pairs = ordered
    state.mode = Mode.EXPLANATION
    return state


def finalize(
    state: EpisodeState, scene: Scene, controller: Optional[ControllerBackend] = None
) -> EpisodeReport:
    """Return to spawn, compose the final outputs and render explanations."""
    if state.mode is not Mode.EXPLANATION:
        raise ValueError("finalize requires explanation mode")
    state.pose = scene.spawn
    confirmed = tuple(e.fact for e in state.ledger if e.status == "confirmed")
    compose = getattr(controller, "compose", None) or compose_final
    description, caption, notes = compose(confirmed)
    explanation_pairs = tuple(
        (pair.question, render_salience(scene, pair.pose, [pair.fact], DEFAULT_GRID_DIMS))
        for pair in state.best_pairs
    )
    anomaly_detected = any(
        is_anomalous(f, state.config.anomaly_lexicon) for f in confirmed
    )
    metrics = EpisodeMetrics(
        spawn_score=state.spawn_score,
        validation_scores=tuple(state.validation_scores),
        active_steps=state.step,
        total_queries=state.total_queries,
        anomaly_detected=anomaly_detected,
    )
    state.mode = Mode.DONE
    return EpisodeReport(
        final_description=description,
        final_caption=caption,
        safety_notes=tuple(notes),
        confirmed_facts=confirmed,
        explanation_pairs=explanation_pairs,
        metrics=metrics,
    )


def run_episode(
    scene: Scene,
    config: EpisodeConfig,
    controller: ControllerBackend,
    perception: PerceptionBackend,
) -> tuple[EpisodeState, EpisodeReport]:
    """Drive one full episode through all four modes."""
    backends = Backends(controller, perception)
    state = start_episode(scene, config, controller, perception)
    while state.mode is Mode.ACTIVE_PERCEPTION:
        step_active(state, backends)
    rng = derive_rng(config.seed, "validation")
    run_validation(state, backends, rng)
    report = finalize(state, scene, controller)
    return state, report


def export_transcript(state: EpisodeState) -> str:
    """One JSON line per turn record."""
    return "\n".join(record.to_json() for record in state.transcript) + "\n"
