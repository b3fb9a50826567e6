"""Line-oriented command grammar for controller turns and summaries.

The controller speaks a closed surface syntax::

    command: <name>
    question: <text>          (optional, depending on the command)

and, when summarising::

    description: <text>
    caption: <text>
    validate: <fact phrase>   (repeated)

Parsing is case-insensitive and whitespace tolerant but otherwise strict:
free-text repair belongs to adapters, not to this parser.  ``parse_turn``
and ``parse_summary`` either return a directive or raise ``GrammarError``
with a machine-readable ``kind``; they never raise anything else, for any
input string.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .facts import Fact, FactParseError, parse_fact_phrase


class Command(enum.Enum):
    MOVE_CLOSER = "move closer"
    MOVE_BACK = "move back"
    MOVE_LEFT = "move left"
    MOVE_RIGHT = "move right"
    SAVE_POSITION = "save position"
    ASK_QUESTION = "ask a question"
    I_KNOW_ENOUGH = "i know enough"


MOVE_COMMANDS = frozenset(
    {Command.MOVE_CLOSER, Command.MOVE_BACK, Command.MOVE_LEFT, Command.MOVE_RIGHT}
)

_COMMANDS_BY_NAME = {c.value: c for c in Command}


class QuestionKind(enum.Enum):
    PRESENCE = "presence"
    COUNT = "count"
    ATTRIBUTE = "attribute"
    OPEN = "open"


class GrammarError(ValueError):
    """Structured parse failure; ``kind`` identifies the violated rule."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class Question:
    kind: QuestionKind
    subject: str  # token phrase; empty for open questions
    raw: str

    @staticmethod
    def presence(subject: str) -> "Question":
        return Question(QuestionKind.PRESENCE, subject, f"is there a {subject}?")

    @staticmethod
    def count(subject: str) -> "Question":
        return Question(QuestionKind.COUNT, subject, f"how many {subject}?")

    @staticmethod
    def attribute(attribute: str, subject: str) -> "Question":
        return Question(
            QuestionKind.ATTRIBUTE, subject, f"what {attribute} is the {subject}?"
        )

    @staticmethod
    def open(raw: str = "what do you see?") -> "Question":
        return Question(QuestionKind.OPEN, "", raw)


@dataclass(frozen=True)
class TurnDirective:
    command: Command
    question: Optional[Question] = None


@dataclass(frozen=True)
class SummaryDirective:
    description: str
    caption: str
    validation_targets: tuple[Fact, ...] = field(default_factory=tuple)


_PRESENCE_RE = re.compile(r"^is there (?:a |an )?(?P<subject>.+)$")
_COUNT_RE = re.compile(r"^how many (?P<subject>.+)$")
_ATTRIBUTE_RE = re.compile(r"^what \S+ is the (?P<subject>.+)$")


def parse_question(text: str) -> Question:
    """Classify a question through the closed grammar; anything else is open."""
    raw = text.strip()
    body = " ".join(raw.lower().rstrip("?").split())
    for kind, pattern in (
        (QuestionKind.PRESENCE, _PRESENCE_RE),
        (QuestionKind.COUNT, _COUNT_RE),
        (QuestionKind.ATTRIBUTE, _ATTRIBUTE_RE),
    ):
        match = pattern.match(body)
        if match:
            return Question(kind, match.group("subject").strip(), raw)
    return Question(QuestionKind.OPEN, "", raw)


def _split_fields(text: str) -> list[tuple[str, str]]:
    """Split nonblank lines into (lowercased key, value) pairs."""
    fields = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            fields.append(("", line))
        else:
            fields.append((key.strip().lower(), value.strip()))
    return fields


def parse_turn(text: str) -> TurnDirective:
    """Parse one controller turn into a TurnDirective.

    Raises GrammarError with kind one of: empty, missing-command,
    multiple-commands, unknown-command, unexpected-line, multiple-questions,
    question-not-allowed, missing-question.
    """
    if not isinstance(text, str) or not text.strip():
        raise GrammarError("empty", "empty controller turn")
    commands: list[str] = []
    questions: list[str] = []
    for key, value in _split_fields(text):
        if key == "command":
            commands.append(value)
        elif key == "question":
            questions.append(value)
        else:
            raise GrammarError("unexpected-line", f"unexpected line: {key or value!r}")
    if not commands:
        raise GrammarError("missing-command", "no command line found")
    if len(commands) > 1:
        raise GrammarError("multiple-commands", "more than one command line")
    if len(questions) > 1:
        raise GrammarError("multiple-questions", "more than one question line")

    name = " ".join(commands[0].lower().split())
    command = _COMMANDS_BY_NAME.get(name)
    if command is None:
        raise GrammarError("unknown-command", f"unknown command: {commands[0]!r}")

    question = parse_question(questions[0]) if questions else None
    if question is not None and command not in MOVE_COMMANDS and command is not Command.ASK_QUESTION:
        raise GrammarError(
            "question-not-allowed", f"{command.value} does not take a question"
        )
    if command is Command.ASK_QUESTION and question is None:
        raise GrammarError("missing-question", "ask a question requires a question line")
    return TurnDirective(command, question)


def parse_summary(text: str) -> SummaryDirective:
    """Parse a controller summary into a SummaryDirective.

    Raises GrammarError with kind one of: empty, missing-description,
    missing-caption, bad-fact, unexpected-line.
    """
    if not isinstance(text, str) or not text.strip():
        raise GrammarError("empty", "empty summary")
    description: Optional[str] = None
    caption: Optional[str] = None
    targets: list[Fact] = []
    for key, value in _split_fields(text):
        if key == "description" and description is None:
            description = value
        elif key == "caption" and caption is None:
            caption = value
        elif key == "validate":
            try:
                targets.append(parse_fact_phrase(value))
            except FactParseError as exc:
                raise GrammarError("bad-fact", str(exc)) from exc
        else:
            raise GrammarError("unexpected-line", f"unexpected line: {key or value!r}")
    if description is None:
        raise GrammarError("missing-description", "summary has no description line")
    if caption is None:
        raise GrammarError("missing-caption", "summary has no caption line")
    return SummaryDirective(description, caption, tuple(targets))


def serialize(directive: Union[TurnDirective, SummaryDirective]) -> str:
    """Canonical rendering such that parse(serialize(d)) == d."""
    if isinstance(directive, TurnDirective):
        if directive.command is Command.ASK_QUESTION and directive.question is None:
            raise ValueError("ask a question requires a question")
        lines = [f"command: {directive.command.value}"]
        if directive.question is not None:
            if (
                directive.command not in MOVE_COMMANDS
                and directive.command is not Command.ASK_QUESTION
            ):
                raise ValueError(f"{directive.command.value} does not take a question")
            lines.append(f"question: {directive.question.raw}")
        return "\n".join(lines)
    if isinstance(directive, SummaryDirective):
        lines = [
            f"description: {directive.description}",
            f"caption: {directive.caption}",
        ]
        lines.extend(f"validate: {fact.phrase()}" for fact in directive.validation_targets)
        return "\n".join(lines)
    raise TypeError(f"cannot serialize {type(directive).__name__}")
