"""Geometric scene world: scene documents, drone kinematics and visibility.

Scenes are axis-aligned boxes with labelled box-shaped objects; some objects
occlude others.  The drone moves in the horizontal plane with fixed command
deltas and never changes altitude or heading.  Visibility is computed by
casting rays from the drone to a deterministic low-discrepancy set of sample
points inside each object's box and counting how many reach it unblocked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Union

from .facts import ANOMALY_LEXICON
from .grammar import Command, MOVE_COMMANDS

TWO_PI = 2.0 * math.pi

# Horizontal move deltas in meters: (forward, leftward) relative to heading.
MOVE_DELTAS = {
    Command.MOVE_CLOSER: (10.0, 0.0),
    Command.MOVE_BACK: (-5.0, 0.0),
    Command.MOVE_LEFT: (0.0, 10.0),
    Command.MOVE_RIGHT: (0.0, -10.0),
}

DEFAULT_SAMPLES_PER_OBJECT = 64


class SceneFormatError(ValueError):
    """Scene document rejected; ``path`` points at the offending field."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by min/max corners."""

    min: Vec3
    max: Vec3

    def contains(self, point: Vec3) -> bool:
        return (
            self.min.x <= point.x <= self.max.x
            and self.min.y <= point.y <= self.max.y
            and self.min.z <= point.z <= self.max.z
        )

    def clamp(self, point: Vec3) -> Vec3:
        return Vec3(
            min(max(point.x, self.min.x), self.max.x),
            min(max(point.y, self.min.y), self.max.y),
            min(max(point.z, self.min.z), self.max.z),
        )

    def volume(self) -> float:
        return (
            (self.max.x - self.min.x)
            * (self.max.y - self.min.y)
            * (self.max.z - self.min.z)
        )


def normalize_yaw(yaw: float) -> float:
    return yaw % TWO_PI


@dataclass(frozen=True)
class Pose:
    position: Vec3
    yaw: float  # radians, normalized to [0, 2*pi)

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))


@dataclass(frozen=True)
class CameraModel:
    horizontal_fov: float  # degrees, in (0, 180)
    max_range: float  # meters, > 0


@dataclass(frozen=True)
class SceneObject:
    id: str
    label: str
    attributes: tuple[str, ...]
    center: Vec3
    extent: Vec3  # half-sizes, strictly positive
    is_anomaly: bool = False
    is_occluder: bool = False


@dataclass(frozen=True)
class Scene:
    name: str
    bounds: Box
    spawn: Pose
    objects: tuple[SceneObject, ...]
    camera: CameraModel


@dataclass(frozen=True)
class Visibility:
    object_id: str
    fraction: float  # unblocked ray fraction in [0, 1]; 0 means fully occluded
    distance: float  # center distance in meters


# ---------- scene document loading ----------


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SceneFormatError(f"missing key {key!r}", path)
    return obj[key]


def _reject_unknown(obj: dict, allowed: set[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise SceneFormatError(f"unknown key {key!r}", f"{path}.{key}")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneFormatError("expected a number", path)
    out = float(value)
    if not math.isfinite(out):
        raise SceneFormatError("value must be finite", path)
    return out


def _vec3(value, path: str) -> Vec3:
    if not isinstance(value, list) or len(value) != 3:
        raise SceneFormatError("expected a [x, y, z] triple", path)
    return Vec3(*(_number(v, f"{path}[{i}]") for i, v in enumerate(value)))


def _string(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise SceneFormatError("expected a nonempty string", path)
    return value


def _strip_header_comments(text: str) -> str:
    """Drop leading '#' comment lines (scene files carry a census header)."""
    lines = text.splitlines()
    index = 0
    while index < len(lines) and (
        not lines[index].strip() or lines[index].lstrip().startswith("#")
    ):
        index += 1
    return "\n".join(lines[index:])


def load_scene(source: Union[bytes, str, IO]) -> Scene:
    """Load and validate a scene document (UTF-8 JSON, see README for schema)."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SceneFormatError(f"not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(_strip_header_comments(source))
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SceneFormatError("top level must be an object")
    _reject_unknown(doc, {"name", "bounds", "spawn", "camera", "objects"}, "$")

    name = _string(_require(doc, "name", "$"), "$.name")

    bounds_doc = _require(doc, "bounds", "$")
    if not isinstance(bounds_doc, dict):
        raise SceneFormatError("expected an object", "$.bounds")
    _reject_unknown(bounds_doc, {"min", "max"}, "$.bounds")
    bounds = Box(
        _vec3(_require(bounds_doc, "min", "$.bounds"), "$.bounds.min"),
        _vec3(_require(bounds_doc, "max", "$.bounds"), "$.bounds.max"),
    )
    if bounds.volume() <= 0:
        raise SceneFormatError("bounds volume must be positive", "$.bounds")

    spawn_doc = _require(doc, "spawn", "$")
    if not isinstance(spawn_doc, dict):
        raise SceneFormatError("expected an object", "$.spawn")
    _reject_unknown(spawn_doc, {"position", "yaw"}, "$.spawn")
    spawn = Pose(
        _vec3(_require(spawn_doc, "position", "$.spawn"), "$.spawn.position"),
        _number(_require(spawn_doc, "yaw", "$.spawn"), "$.spawn.yaw"),
    )
    if not bounds.contains(spawn.position):
        raise SceneFormatError("spawn outside bounds", "$.spawn.position")

    camera_doc = _require(doc, "camera", "$")
    if not isinstance(camera_doc, dict):
        raise SceneFormatError("expected an object", "$.camera")
    _reject_unknown(camera_doc, {"fov_deg", "max_range"}, "$.camera")
    fov = _number(_require(camera_doc, "fov_deg", "$.camera"), "$.camera.fov_deg")
    max_range = _number(_require(camera_doc, "max_range", "$.camera"), "$.camera.max_range")
    if not 0 < fov < 180:
        raise SceneFormatError("fov_deg must be in (0, 180)", "$.camera.fov_deg")
    if max_range <= 0:
        raise SceneFormatError("max_range must be positive", "$.camera.max_range")
    camera = CameraModel(fov, max_range)

    objects_doc = _require(doc, "objects", "$")
    if not isinstance(objects_doc, list) or not objects_doc:
        raise SceneFormatError("expected a nonempty array", "$.objects")
    objects = []
    seen_ids: set[str] = set()
    for index, obj_doc in enumerate(objects_doc):
        path = f"$.objects[{index}]"
        if not isinstance(obj_doc, dict):
            raise SceneFormatError("expected an object", path)
        _reject_unknown(
            obj_doc,
            {"id", "label", "attributes", "center", "extent", "is_anomaly", "is_occluder"},
            path,
        )
        obj_id = _string(_require(obj_doc, "id", path), f"{path}.id")
        if obj_id in seen_ids:
            raise SceneFormatError(f"duplicate object id {obj_id!r}", f"{path}.id")
        seen_ids.add(obj_id)
        label = _string(_require(obj_doc, "label", path), f"{path}.label")
        attrs_doc = obj_doc.get("attributes", [])
        if not isinstance(attrs_doc, list):
            raise SceneFormatError("expected an array", f"{path}.attributes")
        attributes = tuple(
            _string(a, f"{path}.attributes[{i}]") for i, a in enumerate(attrs_doc)
        )
        center = _vec3(_require(obj_doc, "center", path), f"{path}.center")
        extent = _vec3(_require(obj_doc, "extent", path), f"{path}.extent")
        if extent.x <= 0 or extent.y <= 0 or extent.z <= 0:
            raise SceneFormatError("extent components must be positive", f"{path}.extent")
        is_anomaly = bool(obj_doc.get("is_anomaly", False))
        is_occluder = bool(obj_doc.get("is_occluder", False))
        if is_anomaly and not any(a in ANOMALY_LEXICON for a in attributes):
            raise SceneFormatError(
                "anomaly objects need at least one anomaly-lexicon attribute",
                f"{path}.attributes",
            )
        objects.append(
            SceneObject(obj_id, label, attributes, center, extent, is_anomaly, is_occluder)
        )

    return Scene(name, bounds, spawn, tuple(objects), camera)


# ---------- kinematics ----------


def apply_move(pose: Pose, command: Command, bounds: Box) -> tuple[Pose, bool]:
    """Apply a move command; clamp to bounds and flag when clamping occurred.

    Altitude and yaw are never changed.
    """
    if command not in MOVE_COMMANDS:
        raise ValueError(f"not a move command: {command}")
    forward, leftward = MOVE_DELTAS[command]
    cos_yaw, sin_yaw = math.cos(pose.yaw), math.sin(pose.yaw)
    raw = Vec3(
        pose.position.x + forward * cos_yaw - leftward * sin_yaw,
        pose.position.y + forward * sin_yaw + leftward * cos_yaw,
        pose.position.z,
    )
    clamped = bounds.clamp(raw)
    return Pose(clamped, pose.yaw), clamped != raw


def perturb_pose(pose: Pose, sigma: float, rng, bounds: Box) -> Pose:
    """Add zero-mean Gaussian offsets (stddev sigma) to x and y, then clamp.

    Draw order is fixed: x offset first, then y.  Altitude and yaw unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    dx = rng.gauss(0.0, sigma)
    dy = rng.gauss(0.0, sigma)
    raw = Vec3(pose.position.x + dx, pose.position.y + dy, pose.position.z)
    return Pose(bounds.clamp(raw), pose.yaw)


# ---------- visibility ----------


def _halton(index: int, base: int) -> float:
    value, fraction = 0.0, 1.0
    while index > 0:
        fraction /= base
        value += fraction * (index % base)
        index //= base
    return value


def _sample_points(obj: SceneObject, count: int) -> list[Vec3]:
    """Deterministic low-discrepancy sample points inside the object's box."""
    points = []
    for i in range(1, count + 1):
        points.append(
            Vec3(
                obj.center.x + (2.0 * _halton(i, 2) - 1.0) * obj.extent.x,
                obj.center.y + (2.0 * _halton(i, 3) - 1.0) * obj.extent.y,
                obj.center.z + (2.0 * _halton(i, 5) - 1.0) * obj.extent.z,
            )
        )
    return points


def _segment_hits_box(origin: Vec3, target: Vec3, obj: SceneObject) -> bool:
    """Slab test: does the open segment origin->target cross the object's box?"""
    t_min, t_max = 1e-9, 1.0 - 1e-9
    for axis in ("x", "y", "z"):
        start = getattr(origin, axis)
        delta = getattr(target, axis) - start
        low = getattr(obj.center, axis) - getattr(obj.extent, axis)
        high = getattr(obj.center, axis) + getattr(obj.extent, axis)
        if abs(delta) < 1e-12:
            if start < low or start > high:
                return False
            continue
        t0 = (low - start) / delta
        t1 = (high - start) / delta
        if t0 > t1:
            t0, t1 = t1, t0
        t_min = max(t_min, t0)
        t_max = min(t_max, t1)
        if t_max < t_min:
            return False
    return True


def _wrap_angle(angle: float) -> float:
    return (angle + math.pi) % TWO_PI - math.pi


def visible_objects(
    scene: Scene, pose: Pose, samples_per_object: int = DEFAULT_SAMPLES_PER_OBJECT
) -> list[Visibility]:
    """Visibility of every in-frustum object, sorted most visible first.

    Objects whose center lies outside the horizontal FOV wedge or beyond the
    camera range are omitted.  For the rest, fraction is the share of sample
    rays not blocked by any occluder box (an object never occludes itself);
    ties sort by ascending distance, then id.
    """
    half_fov = math.radians(scene.camera.horizontal_fov) / 2.0
    origin = pose.position
    results = []
    for obj in scene.objects:
        dx = obj.center.x - origin.x
        dy = obj.center.y - origin.y
        dz = obj.center.z - origin.z
        distance = math.sqrt(dx * dx + dy * dy + dz * dz)
        if distance > scene.camera.max_range:
            continue
        bearing = _wrap_angle(math.atan2(dy, dx) - pose.yaw)
        if abs(bearing) > half_fov:
            continue
        occluders = [
            other for other in scene.objects if other.is_occluder and other.id != obj.id
        ]
        unblocked = 0
        for point in _sample_points(obj, samples_per_object):
            if not any(_segment_hits_box(origin, point, occ) for occ in occluders):
                unblocked += 1
        results.append(Visibility(obj.id, unblocked / samples_per_object, distance))
    results.sort(key=lambda v: (-v.fraction, v.distance, v.object_id))
    return results
