"""Experiment harness: baseline vs. proposed over environments x placements x seeds.

The baseline issues a single bootstrap query at the spawn pose.  The
proposed pipeline runs a full dialogue episode with the same trial seed but
an independent RNG stream; its score is the mean match score over the spawn
query and every validation probe.  Detection means a confirmed hazard fact
is rendered in the final caption (template renderings are well-formed by
construction).

Seed derivation per trial seed S on a scene named N: the baseline
perception stream uses ``derive_seed(S, "baseline:" + N)``, the episode
perception stream ``derive_seed(S, "perception:" + N)``, and validation
perturbation draws from ``derive_rng(S, "validation")`` inside the engine.
Folding the scene name in decorrelates environments that share a seed.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .engine import (
    BOOTSTRAP_QUESTION,
    EpisodeAbort,
    EpisodeConfig,
    EpisodeError,
    EpisodeReport,
    EpisodeState,
    export_transcript,
    run_episode,
)
from .facts import is_anomalous, parse_caption
from .perception import NoiseModel, SyntheticPerception, save_salience_pgm
from .policy import ScriptedController
from .scenes import ENVIRONMENTS, PLACEMENTS, load_shipped
from .seeding import derive_seed
from .world import Scene

# Calibrated once and then frozen; every reported number assumes these.
NOISE_DEFAULTS = NoiseModel(miss_base=0.05, miss_per_meter=0.004, hallucination_rate=0.02)


class Placement(enum.Enum):
    NEAR = "near"
    FAR = "far"
    OCCLUDED = "occluded"


@dataclass(frozen=True)
class TrialResult:
    environment: str
    placement: Optional[str]  # None for the anomaly-free variant
    seed: int
    baseline_score: float
    proposed_score: float
    baseline_detected: bool
    proposed_detected: bool
    active_steps: int
    total_queries: int


@dataclass(frozen=True)
class EnvironmentSummary:
    baseline_score_mean: Optional[float]
    proposed_score_mean: Optional[float]
    baseline_detection: Optional[float]
    proposed_detection: Optional[float]
    score_trials: int
    detection_trials: int


@dataclass(frozen=True)
class ExperimentReport:
    trials: tuple[TrialResult, ...]
    environments: dict[str, EnvironmentSummary]
    failures: tuple[str, ...] = ()


@dataclass
class TrialOutcome:
    trial: TrialResult
    state: EpisodeState
    report: EpisodeReport


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def eval_baseline(
    scene: Scene, noise: NoiseModel, seed: int, backend=None
) -> tuple[float, bool]:
    """One bootstrap query at spawn: its match score, and whether any hazard
    fact appears in the resulting caption."""
    if backend is None:
        backend = SyntheticPerception(
            scene, replace(noise, seed=derive_seed(seed, f"baseline:{scene.name}"))
        )
    reply = backend.query(BOOTSTRAP_QUESTION, scene.spawn)
    facts = parse_caption(reply.caption)
    detected = any(is_anomalous(f) for f in facts)
    return reply.match_score, detected


def proposed_score_of(report: EpisodeReport) -> float:
    return _mean(list(report.metrics.match_scores))


def detection_of(report: EpisodeReport) -> bool:
    """Detection criterion: a confirmed hazard fact rendered in the final caption."""
    return any(is_anomalous(f) for f in parse_caption(report.final_caption))


def scripted_backends(scene: Scene, seed: int, noise: NoiseModel):
    """Default backend set: scripted controller, synthetic perception, and an
    independent synthetic stream for the baseline query."""
    controller = ScriptedController()
    perception = SyntheticPerception(
        scene, replace(noise, seed=derive_seed(seed, f"perception:{scene.name}"))
    )
    return controller, perception, None  # None: eval_baseline builds its own


def remote_backends_factory(base_url: str):
    """Backends speaking the wire protocol against one server for all scenes.

    Randomness (and therefore reproducibility) is owned by the remote server;
    the scripted determinism guarantees apply only to the default backends.
    """
    from .protocol import BackendEndpoint, RemoteController, RemotePerception

    def factory(scene: Scene, seed: int, noise: NoiseModel):
        endpoint = BackendEndpoint(base_url=base_url)
        perception = RemotePerception(endpoint, scene.name)
        return RemoteController(endpoint), perception, perception

    return factory


def run_trial(
    environment: str,
    placement: Optional[str],
    seed: int,
    config: EpisodeConfig = EpisodeConfig(),
    noise: NoiseModel = NOISE_DEFAULTS,
    scene: Optional[Scene] = None,
    backends_factory=scripted_backends,
) -> TrialOutcome:
    """Run baseline and proposed on one scene with one seed."""
    if scene is None:
        scene = load_shipped(environment, placement)
    controller, perception, baseline_backend = backends_factory(scene, seed, noise)
    baseline_score, baseline_detected = eval_baseline(
        scene, noise, seed, backend=baseline_backend
    )
    state, report = run_episode(scene, replace(config, seed=seed), controller, perception)
    trial = TrialResult(
        environment=environment,
        placement=placement,
        seed=seed,
        baseline_score=baseline_score,
        proposed_score=proposed_score_of(report),
        baseline_detected=baseline_detected,
        proposed_detected=detection_of(report),
        active_steps=report.metrics.active_steps,
        total_queries=report.metrics.total_queries,
    )
    return TrialOutcome(trial, state, report)


def aggregate(trials: Sequence[TrialResult], failures: Sequence[str] = ()) -> ExperimentReport:
    """Per-environment means: scores over anomaly-free trials, detection over
    anomaly trials averaged across placements and seeds."""
    if not trials:
        raise ValueError("no trials to aggregate")
    environments: dict[str, EnvironmentSummary] = {}
    for env in sorted({t.environment for t in trials}):
        score_rows = [t for t in trials if t.environment == env and t.placement is None]
        detect_rows = [t for t in trials if t.environment == env and t.placement is not None]
        environments[env] = EnvironmentSummary(
            baseline_score_mean=_mean([t.baseline_score for t in score_rows])
            if score_rows
            else None,
            proposed_score_mean=_mean([t.proposed_score for t in score_rows])
            if score_rows
            else None,
            baseline_detection=_mean([float(t.baseline_detected) for t in detect_rows])
            if detect_rows
            else None,
            proposed_detection=_mean([float(t.proposed_detected) for t in detect_rows])
            if detect_rows
            else None,
            score_trials=len(score_rows),
            detection_trials=len(detect_rows),
        )
    return ExperimentReport(tuple(trials), environments, tuple(failures))


CSV_COLUMNS = (
    "environment",
    "placement",
    "seed",
    "baseline_score",
    "proposed_score",
    "baseline_detected",
    "proposed_detected",
    "active_steps",
    "total_queries",
)


def report_csv(report: ExperimentReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for t in report.trials:
        writer.writerow(
            [
                t.environment,
                t.placement or "none",
                t.seed,
                repr(t.baseline_score),
                repr(t.proposed_score),
                str(t.baseline_detected).lower(),
                str(t.proposed_detected).lower(),
                t.active_steps,
                t.total_queries,
            ]
        )
    return buffer.getvalue()


def report_json(report: ExperimentReport) -> str:
    payload = {
        "environments": {
            env: {
                "baseline_score_mean": s.baseline_score_mean,
                "proposed_score_mean": s.proposed_score_mean,
                "baseline_detection": s.baseline_detection,
                "proposed_detection": s.proposed_detection,
                "score_trials": s.score_trials,
                "detection_trials": s.detection_trials,
            }
            for env, s in report.environments.items()
        },
        "failures": list(report.failures),
        "trials": [
            {
                "environment": t.environment,
                "placement": t.placement or "none",
                "seed": t.seed,
                "baseline_score": t.baseline_score,
                "proposed_score": t.proposed_score,
                "baseline_detected": t.baseline_detected,
                "proposed_detected": t.proposed_detected,
                "active_steps": t.active_steps,
                "total_queries": t.total_queries,
            }
            for t in report.trials
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class MatrixSpec:
    environments: tuple[str, ...] = ENVIRONMENTS
    placements: tuple[Optional[str], ...] = (None,) + PLACEMENTS
    seeds: int = 10
    config: EpisodeConfig = EpisodeConfig()
    noise: NoiseModel = NOISE_DEFAULTS

    @staticmethod
    def from_file(path) -> "MatrixSpec":
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
        placements = tuple(
            None if p == "none" else Placement(p).value
            for p in doc.get("placements", ["none"])
        )
        config_doc = doc.get("config", {})
        noise_doc = doc.get("noise", {})
        return MatrixSpec(
            environments=tuple(doc.get("environments", ENVIRONMENTS)),
            placements=placements,
            seeds=int(doc.get("seeds", 10)),
            config=EpisodeConfig(
                max_steps=int(config_doc.get("max_steps", 24)),
                sigma=float(config_doc.get("sigma", 1.0)),
                validation_samples=int(config_doc.get("validation_samples", 3)),
                early_stop=bool(config_doc.get("early_stop", True)),
            ),
            noise=NoiseModel(
                miss_base=float(noise_doc.get("miss_base", NOISE_DEFAULTS.miss_base)),
                miss_per_meter=float(
                    noise_doc.get("miss_per_meter", NOISE_DEFAULTS.miss_per_meter)
                ),
                hallucination_rate=float(
                    noise_doc.get("hallucination_rate", NOISE_DEFAULTS.hallucination_rate)
                ),
            ),
        )


def trial_id(environment: str, placement: Optional[str], seed: int) -> str:
    return f"{environment}_{placement or 'none'}_{seed}"


def run_matrix(
    spec: MatrixSpec,
    out_dir: Optional[Path] = None,
    parallel: int = 1,
    seeds: Optional[int] = None,
    backends_factory=scripted_backends,
) -> ExperimentReport:
    """Run the full trial matrix; optionally write reports, transcripts and
    salience maps under out_dir.  Trials are independent; results are
    collected in matrix order regardless of worker scheduling."""
    seed_count = seeds if seeds is not None else spec.seeds
    cells = [
        (env, placement, seed)
        for env in spec.environments
        for placement in spec.placements
        for seed in range(seed_count)
    ]
    outcomes: list[Optional[TrialOutcome]] = [None] * len(cells)
    failures: list[str] = []

    def _run(index: int) -> None:
        env, placement, seed = cells[index]
        try:
            outcomes[index] = run_trial(
                env,
                placement,
                seed,
                config=spec.config,
                noise=spec.noise,
                backends_factory=backends_factory,
            )
        except (EpisodeAbort, EpisodeError) as exc:
            failures.append(f"{trial_id(env, placement, seed)}: {exc}")

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            list(pool.map(_run, range(len(cells))))
    else:
        for index in range(len(cells)):
            _run(index)

    completed = [o for o in outcomes if o is not None]
    report = aggregate([o.trial for o in completed], sorted(failures))

    if out_dir is not None:
        out_dir = Path(out_dir)
        transcripts = out_dir / "transcripts"
        explanations = out_dir / "explanations"
        transcripts.mkdir(parents=True, exist_ok=True)
        explanations.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(report_csv(report), encoding="utf-8")
        (out_dir / "report.json").write_text(report_json(report), encoding="utf-8")
        for outcome in completed:
            t = outcome.trial
            episode = trial_id(t.environment, t.placement, t.seed)
            (transcripts / f"{episode}.jsonl").write_text(
                export_transcript(outcome.state), encoding="utf-8"
            )
            for index, (_question, grid) in enumerate(outcome.report.explanation_pairs):
                save_salience_pgm(grid, explanations / f"explain_{episode}_{index}.pgm")
    return report
