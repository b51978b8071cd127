"""Episode orchestration: feed a measurement source through the tracker.

Each frame the source supplies whatever the tracker's mode consumes
(detections while detecting, an angled box while tracking), mirroring the
detector/tracker split of the front-end.  After a detection is consumed the
synthetic tracker stream is re-seeded, which resets its accumulated drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .config import ScenarioBundle
from .frontend_sim import (
    FrameRecord,
    OutOfSpanError,
    Scenario,
    SyntheticSource,
    ground_truth_pose,
)
from .geometry import Pose
from .metrics import FrameError, pose_error
from .tracker import Mode, PoseEstimate, TrackerState, initial_belief, step

__all__ = ["EpisodeResult", "FrameLog", "frame_times", "run_recorded", "run_synthetic"]


@dataclass(frozen=True, eq=False)
class FrameLog:
    """Everything observed at one frame, for logging and metric computation."""

    t: float
    mode: str
    estimate: Optional[PoseEstimate]
    truth: Optional[Pose]
    error: Optional[FrameError]


@dataclass(frozen=True, eq=False)
class EpisodeResult:
    scenario: Scenario
    frames: list[FrameLog]

    @property
    def errors(self) -> list[FrameError]:
        return [f.error for f in self.frames if f.error is not None]

    @property
    def estimate_count(self) -> int:
        return sum(1 for f in self.frames if f.estimate is not None)


def frame_times(scenario: Scenario) -> list[float]:
    t0, t1 = scenario.span
    if t1 <= t0:
        return [t0]
    n = int((t1 - t0) * scenario.rate_hz + 1e-9) + 1
    dt = 1.0 / scenario.rate_hz
    return [min(t0 + k * dt, t1) for k in range(n)]


def _log_frame(
    scenario: Scenario, t: float, state: TrackerState, estimate: Optional[PoseEstimate]
) -> FrameLog:
    try:
        truth = ground_truth_pose(scenario, t)
    except OutOfSpanError:
        truth = None
    error = None
    if estimate is not None and truth is not None:
        error = pose_error(estimate.pose, truth, scenario.target, t=t)
    return FrameLog(t=t, mode=state.mode.value, estimate=estimate, truth=truth, error=error)


def run_synthetic(
    bundle: ScenarioBundle, seed: int = 0, record_to: Optional[list[FrameRecord]] = None
) -> EpisodeResult:
    """Run one synthetic episode; optionally record the consumed stream."""
    scenario = bundle.scenario
    cfg = bundle.tracker_cfg
    source = SyntheticSource(scenario, seed)
    state = TrackerState()
    if bundle.init_mode == "perturbed_truth":
        pose0, box0 = source.perturbed_initialization()
        state.belief = initial_belief(pose0, cfg)
        state.mode = Mode.TRACKING
        state.last_box = box0
        source.reseed(box0)

    frames: list[FrameLog] = []
    times = frame_times(scenario)
    prev_t = times[0]
    for t in times:
        dt = t - prev_t
        prev_t = t
        if state.mode is Mode.TRACKING:
            frame_input = source.emit_tracker_measurement(t, state.last_box)
        else:
            frame_input = source.emit_detections(t)
        if record_to is not None:
            if isinstance(frame_input, list):
                record_to.append(FrameRecord(t, detections=tuple(frame_input)))
            elif frame_input is None:
                # a lost tracker frame carries no box; an empty detection
                # list replays to the same state transition
                record_to.append(FrameRecord(t, detections=()))
            else:
                record_to.append(FrameRecord(t, tracked=frame_input))
        was_detecting = state.mode is Mode.DETECTING
        state, estimate = step(state, frame_input, dt, cfg)
        if was_detecting and state.mode is Mode.TRACKING:
            source.reseed(state.last_box)
        frames.append(_log_frame(scenario, t, state, estimate))
    return EpisodeResult(scenario=scenario, frames=frames)


def run_recorded(bundle: ScenarioBundle, records: Sequence[FrameRecord]) -> EpisodeResult:
    """Replay a recorded measurement stream through the tracker.

    Ground truth (and therefore errors) is available only where the
    scenario's trajectory covers the recorded timestamps.
    """
    scenario = bundle.scenario
    cfg = bundle.tracker_cfg
    state = TrackerState()
    frames: list[FrameLog] = []
    prev_t = records[0].t if records else 0.0
    for rec in records:
        dt = rec.t - prev_t
        prev_t = rec.t
        frame_input = rec.tracked if rec.tracked is not None else list(rec.detections)
        state, estimate = step(state, frame_input, dt, cfg)
        frames.append(_log_frame(scenario, rec.t, state, estimate))
    return EpisodeResult(scenario=scenario, frames=frames)
