"""Benchmark harness: baseline evaluation, trials, aggregation, CLI outputs."""

import csv
import json
import math

import pytest

from dronescout.cli import main as cli_main
from dronescout.harness import (
    CSV_COLUMNS,
    MatrixSpec,
    NOISE_DEFAULTS,
    TrialResult,
    aggregate,
    eval_baseline,
    report_csv,
    report_json,
    run_matrix,
    run_trial,
)
from dronescout.scenes import load_shipped

from helpers import ZERO_NOISE, fire_scene, make_object, make_scene


def occluded_anomaly_scene():
    return make_scene(
        [
            make_object("blaze", "fire", ("burning",), center=(20, 0, 5), extent=(2, 2, 2), anomaly=True),
            make_object("w", "wall", center=(10, 0, 5), extent=(1, 6, 6), occluder=True),
        ]
    )


# ---------- eval_baseline ----------


def test_baseline_occluded_anomaly_not_detected_at_zero_noise():
    score, detected = eval_baseline(occluded_anomaly_scene(), ZERO_NOISE, seed=0)
    assert not detected


def test_baseline_near_anomaly_detected_at_zero_noise():
    score, detected = eval_baseline(fire_scene(), ZERO_NOISE, seed=0)
    assert detected
    assert score == 1.0


def test_baseline_detection_rate_golden_mountain():
    # Frozen from the reference run over seeds 0..9 with the default noise.
    for placement, expected in (("near", 1.0), ("far", 0.7)):
        scene = load_shipped("mountain_landscape", placement)
        rate = sum(
            eval_baseline(scene, NOISE_DEFAULTS, seed)[1] for seed in range(10)
        ) / 10
        assert rate == expected


# ---------- run_trial ----------


def test_trial_streams_are_independent():
    # consuming the baseline stream must not affect the episode: two trials
    # of the same cell agree, and baseline-only evaluation replays the
    # baseline outcome exactly
    a = run_trial("lake", "near", 3)
    b = run_trial("lake", "near", 3)
    assert a.trial == b.trial
    scene = load_shipped("lake", "near")
    score, detected = eval_baseline(scene, NOISE_DEFAULTS, 3)
    assert (score, detected) == (a.trial.baseline_score, a.trial.baseline_detected)


def test_trial_early_stop_shortens_episode():
    near = run_trial("mountain_landscape", "near", 0)
    plain = run_trial("mountain_landscape", None, 0)
    assert near.trial.active_steps < plain.trial.active_steps


def test_trial_counts_queries():
    out = run_trial("snow_road", "near", 1)
    probes = [r for r in out.state.transcript if r.flags.get("probe")]
    actives = [
        r
        for r in out.state.transcript
        if r.mode == "active_perception" and r.match_score is not None
    ]
    assert out.trial.total_queries == len(probes) + len(actives)


def test_lake_fire_summary_golden():
    # Frozen from the reference run: lake near-anomaly scene, seed 3.
    out = run_trial("lake", "near", 3)
    summary = next(r for r in out.state.transcript if r.flags.get("summary"))
    assert summary.directive_text == (
        "description: observed so far: burning crashed car; burning smoke; weathered dock\n"
        "caption: a burning crashed car and a burning smoke and a weathered dock\n"
        "validate: burning smoke\n"
        "validate: burning crashed car\n"
        "validate: weathered dock"
    )


# ---------- aggregate ----------


def _trial(env, placement, seed, b, p, bd=False, pd=False):
    return TrialResult(env, placement, seed, b, p, bd, pd, 5, 20)


def test_aggregate_single_trial_means_equal_values():
    report = aggregate([_trial("lake", None, 0, 0.25, 0.75)])
    summary = report.environments["lake"]
    assert summary.baseline_score_mean == 0.25
    assert summary.proposed_score_mean == 0.75


def test_aggregate_hand_built_mean():
    trials = [
        _trial("lake", None, 0, 0.2, 0.2),
        _trial("lake", None, 1, 0.4, 0.4),
        _trial("lake", None, 2, 0.6, 0.6),
    ]
    report = aggregate(trials)
    assert math.isclose(report.environments["lake"].baseline_score_mean, 0.4)


def test_aggregate_separates_score_and_detection_rows():
    trials = [
        _trial("lake", None, 0, 0.2, 0.8),
        _trial("lake", "near", 0, 1.0, 1.0, bd=True, pd=True),
        _trial("lake", "occluded", 0, 0.0, 0.9, bd=False, pd=True),
    ]
    report = aggregate(trials)
    summary = report.environments["lake"]
    assert summary.score_trials == 1
    assert summary.detection_trials == 2
    assert summary.baseline_detection == 0.5
    assert summary.proposed_detection == 1.0


def test_aggregate_empty_raises():
    with pytest.raises(ValueError):
        aggregate([])


def test_report_means_recomputable_from_rows():
    spec = MatrixSpec(environments=("lake",), placements=(None, "near"), seeds=3)
    report = run_matrix(spec)
    rows = [t for t in report.trials if t.placement is None]
    recomputed = sum(t.proposed_score for t in rows) / len(rows)
    assert math.isclose(
        recomputed, report.environments["lake"].proposed_score_mean, rel_tol=0, abs_tol=1e-15
    )


# ---------- matrix & outputs ----------


def test_matrix_cell_count():
    spec = MatrixSpec(
        environments=("lake", "snow_road"), placements=("near", "occluded"), seeds=2
    )
    report = run_matrix(spec)
    assert len(report.trials) == 8
    assert report.failures == ()


def test_run_matrix_writes_outputs(tmp_path):
    spec = MatrixSpec(environments=("lake",), placements=(None, "near"), seeds=2)
    report = run_matrix(spec, out_dir=tmp_path, parallel=2)
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "report.json").exists()
    with open(tmp_path / "report.csv", newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 1 + len(report.trials)
    transcripts = sorted(p.name for p in (tmp_path / "transcripts").iterdir())
    assert transcripts == [
        "lake_near_0.jsonl",
        "lake_near_1.jsonl",
        "lake_none_0.jsonl",
        "lake_none_1.jsonl",
    ]
    explanations = list((tmp_path / "explanations").iterdir())
    assert explanations  # at least one salience map was exported
    parsed = json.loads((tmp_path / "report.json").read_text())
    assert set(parsed["environments"]) == {"lake"}


def test_matrix_spec_from_file(tmp_path):
    path = tmp_path / "matrix.json"
    path.write_text(
        json.dumps(
            {
                "environments": ["lake"],
                "placements": ["none", "far"],
                "seeds": 4,
                "config": {"max_steps": 12, "early_stop": False},
                "noise": {"miss_base": 0.1},
            }
        )
    )
    spec = MatrixSpec.from_file(path)
    assert spec.environments == ("lake",)
    assert spec.placements == (None, "far")
    assert spec.seeds == 4
    assert spec.config.max_steps == 12
    assert not spec.config.early_stop
    assert spec.noise.miss_base == 0.1
    assert spec.noise.miss_per_meter == NOISE_DEFAULTS.miss_per_meter


def test_cli_run(tmp_path):
    matrix = tmp_path / "matrix.json"
    matrix.write_text(
        json.dumps({"environments": ["lake"], "placements": ["none"], "seeds": 2})
    )
    out = tmp_path / "out"
    code = cli_main(["run", "--matrix", str(matrix), "--out", str(out)])
    assert code == 0
    assert (out / "report.csv").exists()


def test_cli_rejects_unknown_backend(tmp_path):
    code = cli_main(["run", "--out", str(tmp_path), "--backend", "telepathy"])
    assert code == 2


def test_cli_remote_backend_runs_matrix(tmp_path):
    from dataclasses import replace

    from dronescout.policy import ScriptedController
    from dronescout.perception import SyntheticPerception
    from dronescout.protocol import BackendServer

    scenes = {
        name: load_shipped("lake", placement)
        for name, placement in (("lake", None), ("lake_near", "near"))
    }
    perceptions = {
        name: SyntheticPerception(scene, replace(NOISE_DEFAULTS, seed=1))
        for name, scene in scenes.items()
    }
    matrix = tmp_path / "matrix.json"
    matrix.write_text(
        json.dumps({"environments": ["lake"], "placements": ["none", "near"], "seeds": 1})
    )
    out = tmp_path / "out"
    server = BackendServer(ScriptedController(), perceptions)
    url = server.start()
    try:
        code = cli_main(
            ["run", "--matrix", str(matrix), "--out", str(out), "--backend", f"remote:{url}"]
        )
    finally:
        server.stop()
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["trials"]) == 2
