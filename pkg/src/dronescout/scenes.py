"""Registry of the shipped benchmark scenes.

Four environments, each in an anomaly-free variant plus three hazard
placements (near, far, occluded relative to the spawn view).  Scene files
are JSON documents with a census header comment; see ``world.load_scene``.
"""

from __future__ import annotations

from importlib import resources
from typing import Optional

from .world import Scene, load_scene

ENVIRONMENTS = ("mountain_landscape", "public_square", "snow_road", "lake")
PLACEMENTS = ("near", "far", "occluded")


def scene_resource_name(environment: str, placement: Optional[str] = None) -> str:
    if placement in (None, "none"):
        return f"{environment}.json"
    return f"{environment}_{placement}.json"


def scene_bytes(environment: str, placement: Optional[str] = None) -> bytes:
    name = scene_resource_name(environment, placement)
    path = resources.files("dronescout").joinpath("scenes", name)
    if not path.is_file():
        raise FileNotFoundError(f"no shipped scene {name!r}")
    return path.read_bytes()


def load_shipped(environment: str, placement: Optional[str] = None) -> Scene:
    return load_scene(scene_bytes(environment, placement))
