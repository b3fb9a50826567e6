"""Shared wire-protocol schemas.

The adapter enforces exactly the versioned JSON Schema documents the
dronescout client ships, loaded from the installed package's resources, so
both sides of the wire validate against one source of truth.
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema


class SchemaViolation(ValueError):
    pass


_VALIDATORS: dict[str, jsonschema.Draft202012Validator] = {}


def _validator(name: str) -> jsonschema.Draft202012Validator:
    validator = _VALIDATORS.get(name)
    if validator is None:
        text = (
            resources.files("dronescout")
            .joinpath("schemas", f"{name}.json")
            .read_text("utf-8")
        )
        validator = jsonschema.Draft202012Validator(json.loads(text))
        _VALIDATORS[name] = validator
    return validator


def validate(name: str, payload) -> None:
    errors = sorted(
        _validator(name).iter_errors(payload), key=lambda e: list(e.absolute_path)
    )
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "$"
        raise SchemaViolation(f"{name}: {where}: {first.message}")


def is_valid(name: str, payload) -> bool:
    try:
        validate(name, payload)
        return True
    except SchemaViolation:
        return False
