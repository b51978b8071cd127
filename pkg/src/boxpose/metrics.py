"""Pose-error computation and the evaluation outputs written per run.

Translation error splits into the in-plane component (parallel to the image
plane) and the depth component (along the camera axis); rotation error is
the geodesic angle, computed after symmetry canonicalization for models with
a symmetry axis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import Pose
from .tracker import ObjectModel, apply_symmetry

__all__ = [
    "EmptyInputError",
    "FrameError",
    "ecdf",
    "pose_error",
    "rotation_angle_deg",
    "summarize",
    "write_ecdf_csv",
    "write_frame_errors_csv",
]


class EmptyInputError(ValueError):
    """Statistics requested over an empty collection."""


@dataclass(frozen=True)
class FrameError:
    """Per-frame errors; inplane^2 + depth^2 equals t_err^2 by construction."""

    t: float
    t_err: float
    r_err: float
    inplane_err: float
    depth_err: float

    def __post_init__(self):
        if min(self.t_err, self.r_err, self.inplane_err, self.depth_err) < 0:
            raise ValueError("errors must be >= 0")
        lhs = self.inplane_err**2 + self.depth_err**2
        if abs(lhs - self.t_err**2) > 1e-9 * max(1.0, self.t_err**2):
            raise ValueError("translation decomposition identity violated")


def rotation_angle_deg(a, b) -> float:
    """Geodesic angle between two rotations, in degrees."""
    return math.degrees(2.0 * math.acos(min(1.0, abs(a.dot(b)))))


def pose_error(
    est: Pose, truth: Pose, model: Optional[ObjectModel] = None, t: float = 0.0
) -> FrameError:
    """Errors of an estimated pose against ground truth.

    When the model declares a symmetry axis, both rotations are
    canonicalized first so the unobservable angle does not count.
    """
    dp = est.translation - truth.translation
    depth = abs(float(dp[2]))
    inplane = math.hypot(float(dp[0]), float(dp[1]))
    t_err = math.hypot(inplane, depth)
    qa, qb = est.rotation, truth.rotation
    if model is not None and model.symmetry_axis is not None:
        qa = apply_symmetry(model, est).rotation
        qb = apply_symmetry(model, truth).rotation
    return FrameError(t, t_err, rotation_angle_deg(qa, qb), inplane, depth)


def ecdf(errors: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF sampled at the distinct observed values."""
    values = np.asarray(list(errors), dtype=float)
    if values.size == 0:
        raise EmptyInputError("ecdf of an empty list")
    ordered = np.sort(values)
    thresholds = np.unique(ordered)
    counts = np.searchsorted(ordered, thresholds, side="right")
    return [(float(v), float(c) / values.size) for v, c in zip(thresholds, counts)]


def _median_low(values: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ordered[(len(ordered) - 1) // 2])


def summarize(run: Sequence[FrameError]) -> dict[str, dict[str, float]]:
    """Mean and median per metric; even-length medians take the lower middle."""
    if not run:
        raise EmptyInputError("summary of an empty run")
    columns = {
        "t_err_m": np.array([f.t_err for f in run]),
        "r_err_deg": np.array([f.r_err for f in run]),
        "inplane_err_m": np.array([f.inplane_err for f in run]),
        "depth_err_m": np.array([f.depth_err for f in run]),
    }
    return {
        name: {"mean": float(vals.mean()), "median": _median_low(vals)}
        for name, vals in columns.items()
    }


def write_frame_errors_csv(path, run: Sequence[FrameError]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_s", "t_err_m", "r_err_deg", "inplane_err_m", "depth_err_m"])
        for f in run:
            writer.writerow([repr(f.t), repr(f.t_err), repr(f.r_err),
                             repr(f.inplane_err), repr(f.depth_err)])


def write_ecdf_csv(path, errors: Sequence[float]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "fraction"])
        for threshold, fraction in ecdf(errors):
            writer.writerow([repr(threshold), repr(fraction)])
