"""Normalization of free-form model output toward the canonical grammar.

The dronescout parser is strict by design; all repair happens here.  Rules:
drop any prose before the first recognized key, lowercase the keys (and
command values), collapse stray whitespace, drop unrecognized trailing
lines.  Normalization is idempotent: applying it twice changes nothing.
"""

from __future__ import annotations

import re

_TURN_KEYS = ("command", "question")
_SUMMARY_KEYS = ("description", "caption", "validate")

_KEY_RE = {
    keys: re.compile(
        r"(?is)\b(" + "|".join(keys) + r")\s*:",
    )
    for keys in (_TURN_KEYS, _SUMMARY_KEYS)
}


def _normalize(text: str, keys: tuple[str, ...], lowercase_values: tuple[str, ...]) -> str:
    match = _KEY_RE[keys].search(text or "")
    if not match:
        return (text or "").strip()
    body = text[match.start():]
    lines = []
    for line in body.splitlines():
        parsed = re.match(r"\s*(\w[\w ]*?)\s*:\s*(.*?)\s*$", line)
        if not parsed:
            continue
        key = parsed.group(1).strip().lower()
        if key not in keys:
            continue
        value = " ".join(parsed.group(2).split())
        if key in lowercase_values:
            value = value.lower()
        lines.append(f"{key}: {value}")
    return "\n".join(lines)


def normalize_turn_text(text: str) -> str:
    """e.g. ``"Sure! Command: Move Closer"`` -> ``"command: move closer"``."""
    return _normalize(text, _TURN_KEYS, lowercase_values=("command",))


def normalize_summary_text(text: str) -> str:
    return _normalize(text, _SUMMARY_KEYS, lowercase_values=("validate",))
