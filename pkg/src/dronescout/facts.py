"""Atomic scene facts.

A fact is a single checkable claim about the scene: a labelled thing with
zero or more attribute words, asserted present or absent.  Facts are the
shared vocabulary between captions, questions, the controller's ledger and
ground-truth checks, so parsing and rendering them round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

# Tokens that mark a fact as hazardous wherever they appear (label or attribute).
ANOMALY_LEXICON = ("fire", "smoke", "flame", "crash", "crashed", "burning")

# Canonical caption for an empty fact list.
EMPTY_CAPTION = "nothing notable"


class FactParseError(ValueError):
    """Raised when text cannot be parsed into facts."""


@dataclass(frozen=True)
class Fact:
    """One claim: ``attributes label`` with a polarity.

    Attributes are stored sorted so the same claim compares equal regardless
    of word order in the source text.
    """

    label: str
    attributes: tuple[str, ...] = ()
    present: bool = True

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("fact label must be nonempty")
        object.__setattr__(self, "attributes", tuple(sorted(self.attributes)))

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.attributes + (self.label,)

    def phrase(self) -> str:
        """Render without an article, e.g. ``burning tree`` or ``no smoke``."""
        words = " ".join(self.tokens)
        return words if self.present else f"no {words}"


def is_anomalous(fact: Fact, lexicon: Sequence[str] = ANOMALY_LEXICON) -> bool:
    """A present-polarity fact carrying any lexicon token is an anomaly claim."""
    return fact.present and any(token in lexicon for token in fact.tokens)


def fact_matches_tokens(fact: Fact, tokens: Iterable[str]) -> bool:
    """True when every query token is covered by the fact's label or attributes."""
    return set(tokens) <= set(fact.tokens)


def verify_fact(fact: Fact, objects: Iterable) -> bool:
    """Check a fact against ground-truth objects (anything with .label/.attributes).

    Present facts need at least one object whose label matches and whose
    attribute set covers the fact's attributes; absent facts need no such
    object to exist.
    """
    hit = any(
        obj.label == fact.label and set(fact.attributes) <= set(obj.attributes)
        for obj in objects
    )
    return hit if fact.present else not hit


def parse_fact_phrase(text: str) -> Fact:
    """Parse ``[no] <attributes*> <label>`` into a Fact.

    The last word is the label, everything before it an attribute; a leading
    ``no`` flips polarity to absent.
    """
    words = text.strip().lower().split()
    present = True
    if words and words[0] == "no":
        present = False
        words = words[1:]
    if not words or not all(w.isalpha() for w in words):
        raise FactParseError(f"cannot parse fact phrase: {text!r}")
    return Fact(label=words[-1], attributes=tuple(words[:-1]), present=present)


def render_caption(facts: Sequence[Fact]) -> str:
    """Deterministic caption: ``a <attrs> <label>`` clauses joined by ``and``."""
    if not facts:
        return EMPTY_CAPTION
    parts = []
    for fact in facts:
        words = " ".join(fact.tokens)
        parts.append(f"a {words}" if fact.present else f"no {words}")
    return " and ".join(parts)


def parse_caption(text: str) -> tuple[Fact, ...]:
    """Inverse of render_caption for captions in the canonical template."""
    body = text.strip().lower()
    if not body or body == EMPTY_CAPTION:
        return ()
    facts = []
    for chunk in body.split(" and "):
        words = chunk.strip().split()
        if words and words[0] in ("a", "an"):
            words = words[1:]
        facts.append(parse_fact_phrase(" ".join(words)))
    return tuple(facts)
