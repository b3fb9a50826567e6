"""Scripted controller policy.

A deterministic surrogate for the language-model controller: it explores by
sweeping left and right, moves closer while caption quality improves, saves
positions when something new or well-matched appears, asks about hazard
tokens, and stops once both sweeps are done and scores have plateaued.

The policy is stateless across calls: its belief is rebuilt from the full
dialogue history on every turn, which makes the in-process controller and a
controller behind a wire protocol behave identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .facts import ANOMALY_LEXICON, Fact, parse_caption, render_caption
from .grammar import (
    Command,
    GrammarError,
    MOVE_COMMANDS,
    Question,
    SummaryDirective,
    TurnDirective,
    parse_turn,
    serialize,
)
from .perception import PerceptionReply

SAVE_BUDGET = 3
SCORE_WINDOW = 3
SAVE_SCORE_THRESHOLD = 0.8

# Hazard tokens the controller watches for, and the safety note each one
# triggers when confirmed.
SAFETY_TABLE = {
    "fire": "fire confirmed: dispatch fire suppression and prepare evacuation of the area",
    "flame": "open flame confirmed: dispatch fire suppression and keep a safe standoff distance",
    "burning": "burning object confirmed: alert fire response and monitor for spread",
    "smoke": "smoke confirmed: investigate the source and monitor air conditions",
    "crash": "crash confirmed: notify emergency services and secure the surrounding area",
    "crashed": "crashed vehicle confirmed: notify emergency services and check for casualties",
}

assert set(SAFETY_TABLE) == set(ANOMALY_LEXICON)

_OPEN_QUESTION = "what do you see?"


@dataclass
class ControllerBelief:
    """What the controller has accumulated from the dialogue so far."""

    heard: list[tuple[Fact, int]] = field(default_factory=list)  # (fact, event index)
    last_scores: list[float] = field(default_factory=list)  # at most SCORE_WINDOW
    swept: list[str] = field(default_factory=list)  # of "closer", "left", "right"
    watch_hits: list[str] = field(default_factory=list)  # hazard tokens heard, ordered
    asked_watch: list[str] = field(default_factory=list)  # hazard tokens already queried
    saves_made: int = 0
    save_budget: int = SAVE_BUDGET
    events: int = 0  # perception results seen
    last_event_new_label: bool = False
    last_event_saved: bool = True  # no pending result until one arrives
    last_reply: Optional[PerceptionReply] = None

    @classmethod
    def from_history(
        cls,
        history: Sequence,
        save_budget: int = SAVE_BUDGET,
        watchlist: Sequence[str] = ANOMALY_LEXICON,
    ) -> "ControllerBelief":
        """Replay engine and controller messages into a belief."""
        belief = cls(save_budget=save_budget)
        known_labels: set[str] = set()
        for entry in history:
            role, text = entry.role, entry.text
            if role == "engine":
                reply = _parse_engine_message(text)
                if reply is None:
                    continue
                belief.events += 1
                facts = _safe_parse_caption(reply.caption)
                new_label = any(f.label not in known_labels for f in facts)
                for fact in facts:
                    known_labels.add(fact.label)
                    belief.heard.append((fact, belief.events))
                    for token in fact.tokens:
                        if token in watchlist and token not in belief.watch_hits:
                            belief.watch_hits.append(token)
                belief.last_scores = (belief.last_scores + [reply.match_score])[
                    -SCORE_WINDOW:
                ]
                belief.last_event_new_label = new_label
                belief.last_event_saved = False
                belief.last_reply = reply
            elif role == "controller":
                try:
                    directive = parse_turn(text)
                except GrammarError:
                    continue
                if directive.command is Command.SAVE_POSITION:
                    belief.saves_made += 1
                    belief.last_event_saved = True
                elif directive.command in MOVE_COMMANDS:
                    name = directive.command.value.split()[-1]
                    if name in ("closer", "left", "right") and name not in belief.swept:
                        belief.swept.append(name)
                if (
                    directive.command is Command.ASK_QUESTION
                    and directive.question is not None
                    and directive.question.subject in ANOMALY_LEXICON
                    and directive.question.subject not in belief.asked_watch
                ):
                    belief.asked_watch.append(directive.question.subject)
        return belief


def _safe_parse_caption(caption: str) -> tuple[Fact, ...]:
    try:
        return parse_caption(caption)
    except Exception:
        return ()


def _parse_engine_message(text: str) -> Optional[PerceptionReply]:
    """Extract (answer, caption, score) from an engine message, if present."""
    answer = caption = None
    score = None
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        if not sep:
            continue
        key = key.strip().lower()
        if key == "answer":
            answer = value.strip()
        elif key == "caption":
            caption = value.strip()
        elif key == "match score":
            try:
                score = float(value.strip())
            except ValueError:
                score = None
    if caption is None or score is None:
        return None
    return PerceptionReply(answer or "", caption, score)


def _improving(scores: Sequence[float]) -> bool:
    return len(scores) >= 2 and all(a < b for a, b in zip(scores, scores[1:]))


def scripted_next_turn(
    belief: ControllerBelief, last_result: Optional[PerceptionReply]
) -> TurnDirective:
    """Pick the next command, rules tried in priority order:

    1. save the current position when the last caption introduced a new
       object label or matched well, and save budget remains;
    2. ask a presence question about the first hazard token not yet queried;
    3. move closer while the recent score window is strictly improving;
    4. sweep the first unswept direction, left then right;
    5. otherwise declare the exploration done.
    """
    if (
        last_result is not None
        and not belief.last_event_saved
        and belief.saves_made < belief.save_budget
        and (belief.last_event_new_label or last_result.match_score >= SAVE_SCORE_THRESHOLD)
    ):
        return TurnDirective(Command.SAVE_POSITION)
    for token in belief.watch_hits:
        if token not in belief.asked_watch:
            return TurnDirective(Command.ASK_QUESTION, Question.presence(token))
    if _improving(belief.last_scores):
        return TurnDirective(Command.MOVE_CLOSER, Question.open(_OPEN_QUESTION))
    for direction, command in (("left", Command.MOVE_LEFT), ("right", Command.MOVE_RIGHT)):
        if direction not in belief.swept:
            return TurnDirective(command, Question.open(_OPEN_QUESTION))
    return TurnDirective(Command.I_KNOW_ENOUGH)


def scripted_summary(belief: ControllerBelief) -> SummaryDirective:
    """Summarize accumulated facts and choose what to validate.

    Targets are the facts heard exactly once plus every fact carrying a
    hazard token, deduplicated in first-heard order.
    """
    if not belief.heard:
        return SummaryDirective(
            "the drone observed no notable objects", "nothing notable", ()
        )
    counts: dict[Fact, int] = {}
    first_seen: dict[Fact, int] = {}
    last_seen: dict[Fact, int] = {}
    for fact, event in belief.heard:
        counts[fact] = counts.get(fact, 0) + 1
        first_seen.setdefault(fact, event)
        last_seen[fact] = event
    distinct = list(counts)

    by_recency = sorted(distinct, key=lambda f: (-last_seen[f], first_seen[f], f.phrase()))
    description = "observed so far: " + "; ".join(f.phrase() for f in by_recency)

    by_repetition = sorted(
        distinct, key=lambda f: (-counts[f], first_seen[f], f.phrase())
    )
    caption = render_caption(by_repetition[:4])

    targets = [f for f in distinct if counts[f] == 1]
    for fact in distinct:
        if any(t in ANOMALY_LEXICON for t in fact.tokens) and fact not in targets:
            targets.append(fact)
    targets.sort(key=lambda f: first_seen[f])
    return SummaryDirective(description, caption, tuple(targets))


def compose_final(
    confirmed: Sequence[Fact], safety: dict[str, str] = SAFETY_TABLE
) -> tuple[str, str, list[str]]:
    """Render the final description, caption and safety notes.

    Confirmed hazard facts lead the caption so a confirmed anomaly is always
    rendered; safety notes are one per distinct hazard token, in the order
    the facts were confirmed.
    """
    confirmed = list(confirmed)
    if not confirmed:
        return (
            "the scene contains no notable objects and no anomalies were confirmed",
            "nothing notable",
            [],
        )
    anomalies = [f for f in confirmed if any(t in ANOMALY_LEXICON for t in f.tokens)]
    ordinary = [f for f in confirmed if f not in anomalies]
    ordered = anomalies + ordinary

    description = "confirmed scene contents: " + "; ".join(f.phrase() for f in ordered)
    if anomalies:
        description += ". hazards were confirmed in this scene"
    caption = render_caption(ordered[:4])

    notes: list[str] = []
    seen_tokens: list[str] = []
    for fact in anomalies:
        for token in fact.tokens:
            if token in safety and token not in seen_tokens:
                seen_tokens.append(token)
                notes.append(safety[token])
    return description, caption, notes


class ScriptedController:
    """Controller backend: the scripted policy behind the text interface."""

    def __init__(self, save_budget: int = SAVE_BUDGET):
        self.save_budget = save_budget

    def next_turn(self, history: Sequence) -> str:
        belief = ControllerBelief.from_history(history, self.save_budget)
        return serialize(scripted_next_turn(belief, belief.last_reply))

    def summary(self, history: Sequence) -> str:
        belief = ControllerBelief.from_history(history, self.save_budget)
        return serialize(scripted_summary(belief))

    def compose(self, confirmed: Sequence[Fact]) -> tuple[str, str, list[str]]:
        return compose_final(confirmed)
