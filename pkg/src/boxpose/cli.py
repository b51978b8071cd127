"""Command-line runner: execute scenario files and write run artifacts.

    boxpose run <scenario.yaml> [--seed N] [--out DIR]
    boxpose validate <scenario.yaml>

Every run writes a manifest with the fully resolved configuration so results
are reproducible from the outputs alone; identical config and seed produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .config import ConfigError, ScenarioError, load_bundle, validate_file
from .frontend_sim import OutOfSpanError, ParseError, load_recorded
from .geometry import BehindCameraError
from .metrics import summarize, write_ecdf_csv, write_frame_errors_csv
from .runner import EpisodeResult, run_recorded, run_synthetic

__all__ = ["main"]

_ESTIMATE_COLUMNS = [
    "t_s",
    "mode",
    "px_m",
    "py_m",
    "pz_m",
    "qw",
    "qx",
    "qy",
    "qz",
    "vx_mps",
    "vy_mps",
    "vz_mps",
    "wx_radps",
    "wy_radps",
    "wz_radps",
    "cov_trace",
    "mahalanobis_d",
    "chi2_pass",
    "edge_pass",
]


def _write_estimates_csv(path: Path, result: EpisodeResult) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_ESTIMATE_COLUMNS)
        for frame in result.frames:
            if frame.estimate is None:
                writer.writerow([repr(frame.t), frame.mode] + [""] * 17)
                continue
            est = frame.estimate
            s = est.state
            q = s.orientation
            writer.writerow(
                [repr(frame.t), frame.mode]
                + [repr(float(v)) for v in s.position]
                + [repr(q.w), repr(q.x), repr(q.y), repr(q.z)]
                + [repr(float(v)) for v in s.velocity]
                + [repr(float(v)) for v in s.angular_velocity]
                + [
                    repr(float(est.cov.trace())),
                    repr(est.mahalanobis_d),
                    str(int(est.chi2_pass)),
                    str(int(est.edges_pass)),
                ]
            )


def _write_outputs(out_dir: Path, result: EpisodeResult, resolved: dict, seed: int) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"seed": seed, "config": resolved}
    (out_dir / "manifest.yaml").write_text(
        yaml.safe_dump(manifest, sort_keys=True, default_flow_style=False)
    )
    _write_estimates_csv(out_dir / "estimates.csv", result)
    summary: dict = {
        "scenario": result.scenario.name,
        "frames": len(result.frames),
        "estimates": result.estimate_count,
    }
    errors = result.errors
    if errors:
        summary["metrics"] = summarize(errors)
        write_frame_errors_csv(out_dir / "errors.csv", errors)
        write_ecdf_csv(out_dir / "ecdf_t_err.csv", [e.t_err for e in errors])
        write_ecdf_csv(out_dir / "ecdf_r_err.csv", [e.r_err for e in errors])
        write_ecdf_csv(out_dir / "ecdf_inplane_err.csv", [e.inplane_err for e in errors])
        write_ecdf_csv(out_dir / "ecdf_depth_err.csv", [e.depth_err for e in errors])
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        bundle = load_bundle(args.scenario)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if bundle.source_mode == "recorded":
            try:
                records = load_recorded(bundle.recorded_path)
            except (OSError, ParseError) as exc:
                raise ScenarioError(f"cannot read recorded stream: {exc}") from exc
            result = run_recorded(bundle, records)
        else:
            result = run_synthetic(bundle, seed=args.seed)
    except (ScenarioError, BehindCameraError, OutOfSpanError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    summary = _write_outputs(Path(args.out), result, bundle.resolved, args.seed)
    line = f"{summary['scenario']}: {summary['frames']} frames, {summary['estimates']} estimates"
    if "metrics" in summary:
        t_med = summary["metrics"]["t_err_m"]["median"]
        r_med = summary["metrics"]["r_err_deg"]["median"]
        line += f", median t_err {t_med:.4f} m, median r_err {r_med:.2f} deg"
    print(line)
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        violations = validate_file(args.scenario)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if violations:
        for v in violations:
            print(v)
        return 1
    print(f"{args.scenario}: ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxpose", description="Scenario-driven 6DoF box-measurement pose tracking"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute a scenario and write run artifacts")
    run_p.add_argument("scenario", help="path to a scenario YAML file")
    run_p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    run_p.add_argument("--out", default="runs", help="output directory (default runs/)")
    run_p.set_defaults(func=_cmd_run)
    val_p = sub.add_parser("validate", help="schema-check a scenario file")
    val_p.add_argument("scenario", help="path to a scenario YAML file")
    val_p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
