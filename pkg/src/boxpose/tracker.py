"""Detect/track orchestration for a single object.

The tracker alternates between two modes: in DETECTING it selects a detection
and (re)initializes, in TRACKING it runs the filter on angled-box
measurements and watches the gates for drift, edge proximity, or the periodic
re-detection timer.  Any filter failure drops straight back to DETECTING.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from . import ukf
from .dynamics import DynamicsSpec, RigidBodyState
from .gating import (
    GateConfig,
    aspect_ratio_gate,
    chi2_gate,
    edge_distance_gate,
    edge_ztest,
    mahalanobis,
)
from .geometry import (
    AngledBox,
    AxisAlignedBox,
    CameraModel,
    Pose,
    Quaternion,
    VertexSet,
    quat_multiply,
)
from .ukf import MEASUREMENT_DIM, MeasurementStats, StateBelief, UkfParams

__all__ = [
    "Detection",
    "DegenerateBoxError",
    "Mode",
    "NoSymmetryError",
    "ObjectModel",
    "PoseEstimate",
    "TrackerConfig",
    "TrackerState",
    "apply_symmetry",
    "init_pose_from_box",
    "initial_belief",
    "select_detection",
    "should_redetect",
    "step",
]

logger = logging.getLogger(__name__)


class DegenerateBoxError(ValueError):
    """Initialization was asked to use an unusable bounding box."""


class NoSymmetryError(ValueError):
    """Symmetry canonicalization requested on a model without a symmetry axis."""


class Mode(Enum):
    DETECTING = "detecting"
    TRACKING = "tracking"


@dataclass(frozen=True, eq=False)
class Detection:
    """Axis-aligned detector output with class label and confidence."""

    box: AxisAlignedBox
    class_label: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Everything the tracker knows about the target class.

    ``extent`` is (width, height, length) in meters; ``verts`` must fit
    inside the extent box.  ``symmetry_axis`` (object frame) marks a
    rotational symmetry; ``init_orientation`` is the canonical orientation
    assumed when initializing from a detection (e.g. upright objects).
    """

    class_label: str
    verts: VertexSet
    extent: np.ndarray
    dynamics: DynamicsSpec = field(default_factory=DynamicsSpec)
    symmetry_axis: Optional[np.ndarray] = None
    init_orientation: Optional[Quaternion] = None

    def __post_init__(self):
        ext = np.asarray(self.extent, dtype=float).reshape(3)
        if np.any(ext <= 0):
            raise ValueError("extent must be positive componentwise")
        object.__setattr__(self, "extent", ext)
        half = 0.5 * ext + 1e-9
        if np.any(np.abs(self.verts.points) > half):
            raise ValueError("vertices exceed the extent bounding volume")
        if self.symmetry_axis is not None:
            axis = np.asarray(self.symmetry_axis, dtype=float).reshape(3)
            n = float(np.linalg.norm(axis))
            if n == 0.0:
                raise ValueError("symmetry axis must be nonzero")
            object.__setattr__(self, "symmetry_axis", axis / n)


@dataclass(frozen=True, eq=False)
class TrackerConfig:
    """Static configuration bundle for one tracked object."""

    model: ObjectModel
    camera: CameraModel
    ukf: UkfParams = field(default_factory=UkfParams)
    gates: GateConfig = field(default_factory=GateConfig)
    redetect_period: int = 30
    redetect_hard_fail: int = 5
    uncertainty_trace_max: float = 200.0
    init_pos_sigma: np.ndarray = field(default_factory=lambda: np.array([0.2, 0.2, 0.6]))
    init_vel_sigma: float = 0.5
    init_rot_sigma: float = 0.2
    init_omega_sigma: float = 0.2

    def __post_init__(self):
        sig = np.asarray(self.init_pos_sigma, dtype=float).reshape(3)
        object.__setattr__(self, "init_pos_sigma", sig)


@dataclass
class TrackerState:
    """Mutable per-object tracking state; TRACKING implies belief and last_box."""

    mode: Mode = Mode.DETECTING
    belief: Optional[StateBelief] = None
    last_box: Optional[AngledBox] = None
    frames_since_detection: int = 0
    stats: Optional[MeasurementStats] = None
    consecutive_gate_failures: int = 0


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    """Filter output for one frame plus the gate diagnostics that shaped it."""

    state: RigidBodyState
    cov: np.ndarray
    mahalanobis_d: float
    chi2_pass: bool
    edges_pass: bool

    @property
    def pose(self) -> Pose:
        return self.state.pose()


FrameInput = Union[AngledBox, Sequence[Detection], None]


def init_pose_from_box(box: AngledBox, model: ObjectModel, camera: CameraModel) -> Pose:
    """Coarse pose from a single box: depth by similar triangles on the model
    width, lateral position by back-projecting the center, roll from the box
    angle, remaining orientation from the model's canonical orientation."""
    if not (math.isfinite(box.w) and box.w > 1e-9):
        raise DegenerateBoxError("box width unusable for depth initialization")
    depth = camera.fx * float(model.extent[0]) / box.w
    x = (box.x - camera.cx) * depth / camera.fx
    y = (box.y - camera.cy) * depth / camera.fy
    roll = Quaternion.from_axis_angle((0.0, 0.0, 1.0), box.alpha)
    base = model.init_orientation if model.init_orientation is not None else Quaternion.identity()
    return Pose(quat_multiply(roll, base), np.array([x, y, depth]))


def initial_belief(pose: Pose, cfg: TrackerConfig) -> StateBelief:
    sigmas = np.concatenate(
        [
            cfg.init_pos_sigma,
            np.full(3, cfg.init_vel_sigma),
            np.full(3, cfg.init_rot_sigma),
            np.full(3, cfg.init_omega_sigma),
        ]
    )
    return StateBelief(RigidBodyState.at_rest(pose), np.diag(sigmas**2))


def select_detection(
    detections: Sequence[Detection], state: TrackerState, cfg: TrackerConfig
) -> Optional[Detection]:
    """Pick the detection to act on, or None if everything is rejected.

    Candidates must match the class and pass the aspect-ratio and
    edge-distance gates.  With a confident belief the nearest candidate by
    Mahalanobis distance wins; otherwise the highest confidence does.
    """
    candidates = [
        det
        for det in detections
        if det.class_label == cfg.model.class_label
        and aspect_ratio_gate(det.box, det.class_label, cfg.gates)
        and edge_distance_gate(det.box, cfg.camera, cfg.gates)
    ]
    if not candidates:
        return None
    if (
        state.belief is not None
        and state.stats is not None
        and float(np.trace(state.stats.s_hat)) < cfg.uncertainty_trace_max
    ):
        stats = state.stats
        return min(candidates, key=lambda d: mahalanobis(d.box.as_angled().as_vector(), stats))
    return max(candidates, key=lambda d: d.confidence)


def _gate_outcomes(
    stats: MeasurementStats,
    z: AngledBox,
    frames_since_detection: int,
    camera: CameraModel,
    gates: GateConfig,
    redetect_period: int,
) -> tuple[float, bool, bool, bool]:
    d = mahalanobis(z.as_vector(), stats)
    chi2_ok = chi2_gate(d, MEASUREMENT_DIM, gates)
    edges_ok = all(edge_ztest(stats, camera, gates))
    periodic = frames_since_detection >= redetect_period
    return d, chi2_ok, edges_ok, periodic


def should_redetect(
    stats: MeasurementStats,
    z: AngledBox,
    state: TrackerState,
    camera: CameraModel,
    gates: GateConfig,
    redetect_period: int,
) -> bool:
    """True when the consistency gate, an edge z-test, or the periodic timer fires."""
    _, chi2_ok, edges_ok, periodic = _gate_outcomes(
        stats, z, state.frames_since_detection, camera, gates, redetect_period
    )
    return (not chi2_ok) or (not edges_ok) or periodic


def apply_symmetry(model: ObjectModel, pose: Pose) -> Pose:
    """Canonical pose with the rotation about the symmetry axis removed.

    Uses the swing/twist factorization with the twist (body-frame rotation
    about the axis) stripped off, so poses differing only by that angle map
    to the same representative.
    """
    if model.symmetry_axis is None:
        raise NoSymmetryError(f"model {model.class_label!r} declares no symmetry axis")
    a = model.symmetry_axis
    q = pose.rotation
    proj = q.x * a[0] + q.y * a[1] + q.z * a[2]
    n = math.hypot(q.w, proj)
    if n < 1e-12:
        # 180-degree swing exactly perpendicular to the axis: twist undefined
        return pose
    twist = Quaternion(q.w / n, a[0] * proj / n, a[1] * proj / n, a[2] * proj / n)
    swing = quat_multiply(q, twist.conjugate())
    return Pose(swing, pose.translation)


def step(
    state: TrackerState, frame_input: FrameInput, dt: float, cfg: TrackerConfig
) -> tuple[TrackerState, Optional[PoseEstimate]]:
    """Advance one frame; returns the new state and an estimate when tracking.

    TRACKING consumes an AngledBox (predict, update, gate); DETECTING
    consumes a detection list.  A missing or mode-mismatched measurement
    while tracking forces DETECTING, and detections supplied on that same
    frame are still processed, so recovery takes at most one step.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    st = replace(state)
    if st.belief is not None and dt > 0.0:
        st.belief = ukf.predict(st.belief, dt, cfg.model.dynamics, cfg.ukf)

    estimate = None
    if st.mode is Mode.TRACKING:
        if isinstance(frame_input, AngledBox):
            try:
                st.belief, stats = ukf.update(
                    st.belief, frame_input, cfg.camera, cfg.model.verts, cfg.ukf
                )
            except (
                ukf.MeasurementUndefinedError,
                ukf.InnovationNotPSDError,
                ukf.CholeskyFailureError,
            ) as exc:
                logger.debug("filter update failed, re-detecting: %s", exc)
                st.mode = Mode.DETECTING
                st.stats = None
                return st, None
            st.stats = stats
            st.last_box = frame_input
            st.frames_since_detection += 1
            d, chi2_ok, edges_ok, periodic = _gate_outcomes(
                stats,
                frame_input,
                st.frames_since_detection,
                cfg.camera,
                cfg.gates,
                cfg.redetect_period,
            )
            st.consecutive_gate_failures = 0 if chi2_ok else st.consecutive_gate_failures + 1
            if (not chi2_ok) or (not edges_ok) or periodic:
                st.mode = Mode.DETECTING
            estimate = PoseEstimate(
                state=st.belief.mean,
                cov=st.belief.cov,
                mahalanobis_d=d,
                chi2_pass=chi2_ok,
                edges_pass=edges_ok,
            )
            return st, estimate
        st.mode = Mode.DETECTING  # tracker measurement missing or wrong kind

    if st.mode is Mode.DETECTING and isinstance(frame_input, (list, tuple)):
        chosen = select_detection(frame_input, st, cfg)
        if chosen is not None:
            box = chosen.box.as_angled()
            if st.belief is None or st.consecutive_gate_failures >= cfg.redetect_hard_fail:
                st.belief = initial_belief(init_pose_from_box(box, cfg.model, cfg.camera), cfg)
            st.mode = Mode.TRACKING
            st.last_box = box
            st.stats = None
            st.frames_since_detection = 0
            st.consecutive_gate_failures = 0
    return st, estimate
