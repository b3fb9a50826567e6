"""dronescout: deterministic drone active-perception dialogue simulator."""

from .engine import (
    BOOTSTRAP_QUESTION,
    Backends,
    EpisodeConfig,
    EpisodeReport,
    EpisodeState,
    Mode,
    run_episode,
)
from .facts import ANOMALY_LEXICON, Fact
from .grammar import Command, Question, SummaryDirective, TurnDirective
from .perception import NoiseModel, PerceptionResult, SyntheticPerception
from .policy import ScriptedController
from .world import Pose, Scene, Vec3, load_scene

__version__ = "0.1.0"

__all__ = [
    "ANOMALY_LEXICON",
    "BOOTSTRAP_QUESTION",
    "Backends",
    "Command",
    "EpisodeConfig",
    "EpisodeReport",
    "EpisodeState",
    "Fact",
    "Mode",
    "NoiseModel",
    "PerceptionResult",
    "Pose",
    "Question",
    "Scene",
    "ScriptedController",
    "SummaryDirective",
    "SyntheticPerception",
    "TurnDirective",
    "Vec3",
    "load_scene",
    "run_episode",
    "__version__",
]
