"""Measurement sources that stand in for the detection/tracking front-end.

`SyntheticSource` renders detections and angled-box tracker outputs from a
ground-truth trajectory with configurable corruption (noise, drift, dropout,
occlusion/exit events).  `load_recorded`/`save_recorded` move the same stream
through a line-delimited text file.  All randomness flows from one seeded
generator, so a seed fully determines a stream.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    AngledBox,
    AxisAlignedBox,
    CameraModel,
    Pose,
    predict_measurement,
    slerp,
    to_axis_aligned,
)
from .tracker import Detection, ObjectModel

__all__ = [
    "DISTRACTOR_LABEL",
    "Event",
    "EventKind",
    "FrameRecord",
    "NoiseSpec",
    "OCCLUSION_DRIFT_AMPLIFICATION",
    "OutOfSpanError",
    "ParseError",
    "Scenario",
    "SyntheticSource",
    "ground_truth_box",
    "ground_truth_pose",
    "interpolate_pose",
    "load_recorded",
    "save_recorded",
]

# Tracker drift multiplies by this while the target is occluded, modeling the
# box latching onto background and sliding off the object.
OCCLUSION_DRIFT_AMPLIFICATION = 10.0

DISTRACTOR_LABEL = "clutter"


class OutOfSpanError(ValueError):
    """Queried time lies outside the trajectory span."""


class ParseError(ValueError):
    """A recorded measurement file could not be parsed."""

    def __init__(self, message: str, record_index: int):
        super().__init__(f"record {record_index}: {message}")
        self.record_index = record_index


class EventKind(Enum):
    OCCLUSION = "occlusion"
    EXIT_FRAME = "exit_frame"
    TELEPORT = "teleport"


@dataclass(frozen=True, eq=False)
class Event:
    """A timed disturbance; ``offset`` only applies to TELEPORT events."""

    kind: EventKind
    start_t: float
    end_t: float
    offset: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        if not self.start_t < self.end_t:
            raise ValueError("event needs start_t < end_t")
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(3))

    def active(self, t: float) -> bool:
        return self.start_t <= t < self.end_t


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption levels for the synthetic front-end.

    ``init_translation_noise`` (meters, uniform bound per axis) and
    ``init_box_noise_frac`` mirror the perturbed-initialization protocol of
    the evaluation: up to 4 cm of translation noise and box noise up to 5%
    of the box size.
    """

    pixel_sigma: float = 1.0
    size_sigma_frac: float = 0.02
    alpha_sigma: float = 0.01
    tracker_drift_rate: float = 0.0
    detection_dropout: float = 0.0
    init_translation_noise: float = 0.04
    init_box_noise_frac: float = 0.05
    distractor_rate: float = 0.0

    def __post_init__(self):
        for name in (
            "pixel_sigma",
            "size_sigma_frac",
            "alpha_sigma",
            "tracker_drift_rate",
            "detection_dropout",
            "init_translation_noise",
            "init_box_noise_frac",
            "distractor_rate",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.detection_dropout > 1.0:
            raise ValueError("detection_dropout is a probability")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Ground truth plus corruption settings for one synthetic episode."""

    camera: CameraModel
    target: ObjectModel
    trajectory: tuple[tuple[float, Pose], ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    events: tuple[Event, ...] = ()
    rate_hz: float = 30.0
    name: str = ""

    def __post_init__(self):
        traj = tuple((float(t), pose) for t, pose in self.trajectory)
        if not traj:
            raise ValueError("trajectory must have at least one knot")
        times = [t for t, _ in traj]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")
        for ev in self.events:
            if ev.start_t < times[0] - 1e-9 or ev.end_t > times[-1] + 1e-9:
                raise ValueError("events must lie within the trajectory span")
        object.__setattr__(self, "trajectory", traj)
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "_times", tuple(times))
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")

    @property
    def span(self) -> tuple[float, float]:
        return self._times[0], self._times[-1]

    def active_events(self, t: float, kind: EventKind) -> bool:
        return any(ev.kind is kind and ev.active(t) for ev in self.events)


def interpolate_pose(trajectory: Sequence[tuple[float, Pose]], t: float) -> Pose:
    """Piecewise-linear position and geodesic rotation interpolation."""
    times = [k for k, _ in trajectory]
    if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
        raise OutOfSpanError(f"t={t} outside trajectory span [{times[0]}, {times[-1]}]")
    t = min(max(t, times[0]), times[-1])
    if len(trajectory) == 1:
        return trajectory[0][1]
    i = min(max(bisect_right(times, t) - 1, 0), len(times) - 2)
    t0, p0 = trajectory[i]
    t1, p1 = trajectory[i + 1]
    u = (t - t0) / (t1 - t0)
    position = p0.translation + u * (p1.translation - p0.translation)
    return Pose(slerp(p0.rotation, p1.rotation, u), position)


def ground_truth_pose(scenario: Scenario, t: float) -> Pose:
    pose = interpolate_pose(scenario.trajectory, t)
    for ev in scenario.events:
        if ev.kind is EventKind.TELEPORT and ev.active(t):
            pose = Pose(pose.rotation, pose.translation + ev.offset)
    return pose


def ground_truth_box(scenario: Scenario, t: float) -> AngledBox:
    """The exact measurement the front-end would see at time t."""
    return predict_measurement(
        scenario.camera, ground_truth_pose(scenario, t), scenario.target.verts
    )


class SyntheticSource:
    """Seeded generator of detections and tracker boxes for a scenario."""

    def __init__(self, scenario: Scenario, seed: int = 0):
        self.scenario = scenario
        self.rng = np.random.default_rng(seed)
        self._drift = np.zeros(2)
        self._drift_dir = self._sample_direction()

    def _sample_direction(self) -> np.ndarray:
        theta = self.rng.uniform(0.0, 2.0 * math.pi)
        return np.array([math.cos(theta), math.sin(theta)])

    def reseed(self, box: AngledBox) -> None:
        """Reset tracker drift after a detection re-seeds the front-end box."""
        self._drift = np.zeros(2)
        self._drift_dir = self._sample_direction()

    def emit_tracker_measurement(self, t: float, prev_box: Optional[AngledBox]) -> Optional[AngledBox]:
        """Simulated visual-tracker output, or None when the tracker loses the box."""
        if prev_box is None:
            return None
        noise = self.scenario.noise
        cam = self.scenario.camera
        if self.scenario.active_events(t, EventKind.EXIT_FRAME):
            truth = ground_truth_box(self.scenario, t)
            if not (0.0 <= truth.x < cam.width and 0.0 <= truth.y < cam.height):
                return None
        elif self.scenario.active_events(t, EventKind.OCCLUSION):
            step = OCCLUSION_DRIFT_AMPLIFICATION * noise.tracker_drift_rate
            self._drift = self._drift + step * self._drift_dir
            return AngledBox(
                prev_box.x + step * self._drift_dir[0],
                prev_box.y + step * self._drift_dir[1],
                prev_box.w,
                prev_box.h,
                prev_box.alpha,
            )
        else:
            truth = ground_truth_box(self.scenario, t)
        self._drift = self._drift + noise.tracker_drift_rate * self._drift_dir
        x = truth.x + self._drift[0] + self.rng.normal(0.0, noise.pixel_sigma)
        y = truth.y + self._drift[1] + self.rng.normal(0.0, noise.pixel_sigma)
        w = max(truth.w * (1.0 + self.rng.normal(0.0, noise.size_sigma_frac)), 1e-6)
        h = max(truth.h * (1.0 + self.rng.normal(0.0, noise.size_sigma_frac)), 1e-6)
        alpha = truth.alpha + self.rng.normal(0.0, noise.alpha_sigma)
        return AngledBox(x, y, w, h, alpha)

    def emit_detections(self, t: float) -> list[Detection]:
        """Simulated detector output; empty during occlusion or dropout."""
        noise = self.scenario.noise
        if self.scenario.active_events(t, EventKind.OCCLUSION):
            return []
        if noise.detection_dropout > 0 and self.rng.uniform() < noise.detection_dropout:
            return []
        truth = to_axis_aligned(ground_truth_box(self.scenario, t))
        x = truth.x + self.rng.normal(0.0, noise.pixel_sigma)
        y = truth.y + self.rng.normal(0.0, noise.pixel_sigma)
        w = max(truth.w * (1.0 + self.rng.normal(0.0, noise.size_sigma_frac)), 1e-6)
        h = max(truth.h * (1.0 + self.rng.normal(0.0, noise.size_sigma_frac)), 1e-6)
        detections = [
            Detection(
                AxisAlignedBox(x, y, w, h),
                self.scenario.target.class_label,
                float(self.rng.uniform(0.5, 1.0)),
            )
        ]
        if noise.distractor_rate > 0:
            cam = self.scenario.camera
            for _ in range(int(self.rng.poisson(noise.distractor_rate))):
                detections.append(
                    Detection(
                        AxisAlignedBox(
                            self.rng.uniform(0.0, cam.width),
                            self.rng.uniform(0.0, cam.height),
                            self.rng.uniform(10.0, 120.0),
                            self.rng.uniform(10.0, 120.0),
                        ),
                        DISTRACTOR_LABEL,
                        float(self.rng.uniform(0.5, 1.0)),
                    )
                )
        return detections

    def perturbed_initialization(self) -> tuple[Pose, AngledBox]:
        """Ground-truth start pose with uniform translation noise, plus the
        first box rendered at that noisy pose with fractional box noise.

        Size noise pairs the width bound with the row and width components,
        and the height bound with the column and height components.
        """
        noise = self.scenario.noise
        t0, pose0 = self.scenario.trajectory[0]
        b = noise.init_translation_noise
        offset = self.rng.uniform(-b, b, 3)
        pose = Pose(pose0.rotation, pose0.translation + offset)
        box = predict_measurement(self.scenario.camera, pose, self.scenario.target.verts)
        f = noise.init_box_noise_frac
        y = box.y + self.rng.uniform(-f * box.w, f * box.w)
        w = box.w + self.rng.uniform(-f * box.w, f * box.w)
        x = box.x + self.rng.uniform(-f * box.h, f * box.h)
        h = box.h + self.rng.uniform(-f * box.h, f * box.h)
        return pose, AngledBox(x, y, max(w, 1e-6), max(h, 1e-6), box.alpha)


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One timestamped front-end output: a detection list or a tracker box."""

    t: float
    detections: Optional[tuple[Detection, ...]] = None
    tracked: Optional[AngledBox] = None

    def __post_init__(self):
        if (self.detections is None) == (self.tracked is None):
            raise ValueError("record carries either detections or a tracked box")
        if self.detections is not None:
            object.__setattr__(self, "detections", tuple(self.detections))


def save_recorded(path, records: Sequence[FrameRecord]) -> None:
    """Write records in the line format read back by :func:`load_recorded`."""
    lines = ["# boxpose measurement stream v1"]
    for rec in records:
        if rec.tracked is not None:
            b = rec.tracked
            lines.append(
                f"{rec.t!r} TRK {b.x!r} {b.y!r} {b.w!r} {b.h!r} {b.alpha!r}"
            )
        else:
            parts = [f"{rec.t!r}", "DET"]
            for det in rec.detections:
                if any(ch.isspace() for ch in det.class_label):
                    raise ValueError(f"class label {det.class_label!r} contains whitespace")
                bb = det.box
                parts.extend([repr(bb.x), repr(bb.y), repr(bb.w), repr(bb.h),
                              repr(det.confidence), det.class_label])
            lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n")


def load_recorded(path) -> list[FrameRecord]:
    """Parse a recorded measurement stream; ParseError names the bad record."""
    records: list[FrameRecord] = []
    last_t = -math.inf
    index = 0
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        index += 1
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError("expected '<t> TRK|DET ...'", index)
        try:
            t = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad timestamp {tokens[0]!r}", index) from None
        if t < last_t:
            raise ParseError("timestamps must be non-decreasing", index)
        last_t = t
        kind = tokens[1]
        body = tokens[2:]
        if kind == "TRK":
            if len(body) != 5:
                raise ParseError("TRK record needs x y w h alpha", index)
            try:
                x, y, w, h, alpha = (float(v) for v in body)
                records.append(FrameRecord(t, tracked=AngledBox(x, y, w, h, alpha)))
            except ValueError as exc:
                raise ParseError(str(exc), index) from None
        elif kind == "DET":
            if len(body) % 6 != 0:
                raise ParseError("DET record needs groups of x y w h conf label", index)
            dets = []
            for j in range(0, len(body), 6):
                try:
                    x, y, w, h, conf = (float(v) for v in body[j : j + 5])
                    dets.append(Detection(AxisAlignedBox(x, y, w, h), body[j + 5], conf))
                except ValueError as exc:
                    raise ParseError(str(exc), index) from None
            records.append(FrameRecord(t, detections=tuple(dets)))
        else:
            raise ParseError(f"unknown record kind {kind!r}", index)
    return records
