"""Command line entry point: run the benchmark matrix and write reports."""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .harness import MatrixSpec, remote_backends_factory, run_matrix, scripted_backends


def _default_matrix_path() -> Path:
    return Path(str(resources.files("dronescout").joinpath("matrices", "default.json")))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dronescout",
        description="Active-perception dialogue benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a trial matrix and write reports")
    run.add_argument("--matrix", type=Path, default=None, help="matrix spec JSON")
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--seeds", type=int, default=None, help="override seed count")
    run.add_argument("--parallel", type=int, default=1, help="worker threads")
    run.add_argument(
        "--backend",
        default="scripted",
        help="'scripted' (default) or 'remote:<base-url>'",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "run":
        return 2
    if args.backend == "scripted":
        backends_factory = scripted_backends
    elif args.backend.startswith("remote:"):
        # Reproducibility of remote runs is owned by the remote server.
        backends_factory = remote_backends_factory(args.backend.split(":", 1)[1])
    else:
        print(f"unknown backend {args.backend!r}", file=sys.stderr)
        return 2
    matrix_path = args.matrix if args.matrix is not None else _default_matrix_path()
    try:
        spec = MatrixSpec.from_file(matrix_path)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bad matrix file {matrix_path}: {exc}", file=sys.stderr)
        return 2
    report = run_matrix(
        spec,
        out_dir=args.out,
        parallel=args.parallel,
        seeds=args.seeds,
        backends_factory=backends_factory,
    )

    for line in report.failures:
        print(f"FAILED TRIAL {line}", file=sys.stderr)
    for env, summary in report.environments.items():
        parts = [env]
        if summary.baseline_score_mean is not None:
            parts.append(
                f"score {summary.baseline_score_mean:.3f} -> {summary.proposed_score_mean:.3f}"
            )
        if summary.baseline_detection is not None:
            parts.append(
                f"detection {summary.baseline_detection:.2f} -> {summary.proposed_detection:.2f}"
            )
        print("  ".join(parts))

    # Invariant: aggregate means must be recomputable from the trial rows.
    for env, summary in report.environments.items():
        rows = [t for t in report.trials if t.environment == env and t.placement is None]
        if rows:
            recomputed = sum(t.proposed_score for t in rows) / len(rows)
            if abs(recomputed - summary.proposed_score_mean) > 1e-12:
                print(f"aggregate mismatch for {env}", file=sys.stderr)
                return 1
    if report.failures:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
