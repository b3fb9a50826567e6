"""Deterministic RNG stream derivation.

Every random draw in the system flows from an explicit seed.  Independent
streams for different purposes (baseline query, episode perception,
validation perturbation) are derived from one trial seed by hashing the
seed together with a purpose label, so streams never alias and results are
reproducible across processes and machines.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(seed: int, label: str) -> random.Random:
    return random.Random(derive_seed(seed, label))
