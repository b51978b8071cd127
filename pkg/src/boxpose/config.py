"""Scenario configuration files: schema, validation, and object construction.

A scenario is one YAML file with explicit units in key names.  `validate_file`
returns every violation it can find without running anything; `load_bundle`
builds the runtime objects and raises ConfigError on the first problem set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .dynamics import DynamicsSpec, block_process_noise, registered_models
from .frontend_sim import Event, EventKind, NoiseSpec, Scenario
from .gating import GateConfig
from .geometry import CameraModel, Pose, Quaternion, VertexSet
from .shapes import SHAPE_FACTORIES, make_shape
from .tracker import ObjectModel, TrackerConfig
from .ukf import UkfParams

__all__ = [
    "ConfigError",
    "ScenarioBundle",
    "ScenarioError",
    "load_bundle",
    "validate_file",
]


class ConfigError(ValueError):
    """The configuration file is missing, malformed, or violates the schema."""


class ScenarioError(RuntimeError):
    """The scenario is syntactically valid but fails at run time."""


_TOP_LEVEL_KEYS = {
    "name",
    "rate_hz",
    "camera",
    "object",
    "trajectory",
    "noise",
    "events",
    "init",
    "ukf",
    "gates",
    "tracker",
    "source",
}

_DEFAULTS: dict[str, Any] = {
    "name": "",
    "rate_hz": 30.0,
    "noise": {
        "pixel_sigma_px": 1.0,
        "size_sigma_frac": 0.02,
        "alpha_sigma_rad": 0.01,
        "tracker_drift_px_per_frame": 0.0,
        "detection_dropout": 0.0,
        "init_translation_noise_m": 0.04,
        "init_box_noise_frac": 0.05,
        "distractor_rate": 0.0,
    },
    "events": [],
    "init": {
        "mode": "detect",
        "pos_sigma_m": [0.2, 0.2, 0.6],
        "vel_sigma_mps": 0.5,
        "rot_sigma_rad": 0.2,
        "omega_sigma_radps": 0.2,
    },
    "ukf": {
        "alpha": 0.1,
        "beta": 2.0,
        "kappa": 0.0,
        "measurement_sigma": {"center_px": 2.0, "size_px": 4.0, "alpha_rad": 0.05},
    },
    "gates": {
        "chi2_quantile": 0.997,
        "ztest_quantile": 0.997,
        "d_min_px": 5.0,
        "aspect_ratio_bounds": {},
    },
    "tracker": {
        "redetect_period_frames": 30,
        "redetect_hard_fail_frames": 5,
        "uncertainty_trace_max": 200.0,
    },
    "source": {"mode": "synthetic", "path": None},
    "object_defaults": {
        "shape": "box",
        "dynamics_model": "constant_velocity",
        "process_noise": {"pos": 1e-6, "vel": 1e-2, "rot": 1e-5, "omega": 1e-3},
        "symmetry_axis": None,
        "init_orientation_rpy_deg": None,
    },
}


@dataclass(frozen=True, eq=False)
class ScenarioBundle:
    """Everything a run needs, plus the fully resolved config for the manifest."""

    scenario: Scenario
    tracker_cfg: TrackerConfig
    init_mode: str
    source_mode: str
    recorded_path: Optional[Path]
    resolved: dict[str, Any]


def _merge(defaults: Any, overrides: Any) -> Any:
    if isinstance(defaults, dict) and isinstance(overrides, dict):
        out = dict(defaults)
        for key, value in overrides.items():
            out[key] = _merge(defaults.get(key), value)
        return out
    return defaults if overrides is None else overrides


def _as_number(value: Any) -> Optional[float]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    return float(value)


def _read_yaml(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"scenario file {path} must contain a mapping")
    return data


def _resolve(raw: dict[str, Any]) -> dict[str, Any]:
    resolved = {
        "name": raw.get("name", _DEFAULTS["name"]),
        "rate_hz": raw.get("rate_hz", _DEFAULTS["rate_hz"]),
        "camera": raw.get("camera"),
        "object": _merge(_DEFAULTS["object_defaults"], raw.get("object")),
        "trajectory": raw.get("trajectory"),
        "noise": _merge(_DEFAULTS["noise"], raw.get("noise")),
        "events": raw.get("events", []),
        "init": _merge(_DEFAULTS["init"], raw.get("init")),
        "ukf": _merge(_DEFAULTS["ukf"], raw.get("ukf")),
        "gates": _merge(_DEFAULTS["gates"], raw.get("gates")),
        "tracker": _merge(_DEFAULTS["tracker"], raw.get("tracker")),
        "source": _merge(_DEFAULTS["source"], raw.get("source")),
    }
    return resolved


def _check_positive(out: list[str], section: dict, key: str, prefix: str, strict=True):
    v = _as_number(section.get(key))
    if v is None:
        out.append(f"{prefix}.{key}: must be a number")
    elif strict and v <= 0:
        out.append(f"{prefix}.{key}: must be > 0")
    elif not strict and v < 0:
        out.append(f"{prefix}.{key}: must be >= 0")


def _validate_resolved(cfg: dict[str, Any], raw: dict[str, Any]) -> list[str]:
    out: list[str] = []
    for key in raw:
        if key not in _TOP_LEVEL_KEYS:
            out.append(f"{key}: unknown top-level key")

    cam = cfg["camera"]
    if not isinstance(cam, dict):
        out.append("camera: section is required")
    else:
        for key in ("fx_px", "fy_px", "cx_px", "cy_px", "width_px", "height_px"):
            if key not in cam:
                out.append(f"camera.{key}: missing")
            elif key in ("fx_px", "fy_px", "width_px", "height_px"):
                _check_positive(out, cam, key, "camera")

    obj = cfg["object"]
    if not isinstance(obj, dict):
        out.append("object: section is required")
    else:
        if not isinstance(obj.get("class_label"), str) or not obj.get("class_label"):
            out.append("object.class_label: must be a non-empty string")
        extent = obj.get("extent_m")
        if (
            not isinstance(extent, (list, tuple))
            or len(extent) != 3
            or any(_as_number(v) is None or float(v) <= 0 for v in extent)
        ):
            out.append("object.extent_m: must be three positive numbers")
        if obj.get("vertices_m") is None and obj.get("shape") not in SHAPE_FACTORIES:
            out.append(f"object.shape: unknown shape {obj.get('shape')!r}")
        if obj.get("dynamics_model") not in registered_models():
            out.append(f"object.dynamics_model: unknown model {obj.get('dynamics_model')!r}")
        pn = obj.get("process_noise", {})
        if isinstance(pn, dict):
            for key in ("pos", "vel", "rot", "omega"):
                _check_positive(out, pn, key, "object.process_noise", strict=False)
        else:
            out.append("object.process_noise: must be a mapping with pos/vel/rot/omega")
        axis = obj.get("symmetry_axis")
        if axis is not None and (
            not isinstance(axis, (list, tuple))
            or len(axis) != 3
            or all(_as_number(v) in (None, 0.0) for v in axis)
        ):
            out.append("object.symmetry_axis: must be a nonzero 3-vector or null")

    traj = cfg["trajectory"]
    if not isinstance(traj, list) or not traj:
        out.append("trajectory: must be a non-empty list of knots")
    else:
        last_t = -math.inf
        for i, knot in enumerate(traj):
            prefix = f"trajectory[{i}]"
            if not isinstance(knot, dict):
                out.append(f"{prefix}: must be a mapping")
                continue
            t = _as_number(knot.get("t_s"))
            if t is None:
                out.append(f"{prefix}.t_s: must be a number")
            elif t <= last_t:
                out.append(f"{prefix}.t_s: timestamps must be strictly increasing")
            else:
                last_t = t
            pos = knot.get("pos_m")
            if not isinstance(pos, (list, tuple)) or len(pos) != 3:
                out.append(f"{prefix}.pos_m: must be a 3-vector")
            rpy = knot.get("rpy_deg", [0.0, 0.0, 0.0])
            if not isinstance(rpy, (list, tuple)) or len(rpy) != 3:
                out.append(f"{prefix}.rpy_deg: must be a 3-vector")

    noise = cfg["noise"]
    for key in (
        "pixel_sigma_px",
        "size_sigma_frac",
        "alpha_sigma_rad",
        "tracker_drift_px_per_frame",
        "detection_dropout",
        "init_translation_noise_m",
        "init_box_noise_frac",
        "distractor_rate",
    ):
        _check_positive(out, noise, key, "noise", strict=False)
    dropout = _as_number(noise.get("detection_dropout"))
    if dropout is not None and dropout > 1.0:
        out.append("noise.detection_dropout: must be <= 1")

    span = None
    if isinstance(traj, list) and traj:
        times = [_as_number(k.get("t_s")) for k in traj if isinstance(k, dict)]
        times = [t for t in times if t is not None]
        if times:
            span = (min(times), max(times))
    for i, ev in enumerate(cfg["events"]):
        prefix = f"events[{i}]"
        if not isinstance(ev, dict):
            out.append(f"{prefix}: must be a mapping")
            continue
        kind = ev.get("kind")
        if kind not in {k.value for k in EventKind}:
            out.append(f"{prefix}.kind: unknown event kind {kind!r}")
        start = _as_number(ev.get("start_t_s"))
        end = _as_number(ev.get("end_t_s"))
        if start is None or end is None or not start < end:
            out.append(f"{prefix}: needs start_t_s < end_t_s")
        elif span is not None and (start < span[0] - 1e-9 or end > span[1] + 1e-9):
            out.append(f"{prefix}: must lie within the trajectory span")

    init = cfg["init"]
    if init.get("mode") not in ("detect", "perturbed_truth"):
        out.append("init.mode: must be 'detect' or 'perturbed_truth'")
    pos_sigma = init.get("pos_sigma_m")
    if not isinstance(pos_sigma, (list, tuple)) or len(pos_sigma) != 3:
        out.append("init.pos_sigma_m: must be a 3-vector")
    for key in ("vel_sigma_mps", "rot_sigma_rad", "omega_sigma_radps"):
        _check_positive(out, init, key, "init", strict=False)

    ukf_cfg = cfg["ukf"]
    alpha = _as_number(ukf_cfg.get("alpha"))
    if alpha is None or not 0.0 < alpha <= 1.0:
        out.append("ukf.alpha: must lie in (0, 1]")
    kappa = _as_number(ukf_cfg.get("kappa"))
    if kappa is None or kappa < 0:
        out.append("ukf.kappa: must be >= 0")
    ms = ukf_cfg.get("measurement_sigma", {})
    if isinstance(ms, dict):
        for key in ("center_px", "size_px", "alpha_rad"):
            _check_positive(out, ms, key, "ukf.measurement_sigma", strict=False)
    else:
        out.append("ukf.measurement_sigma: must be a mapping")

    gates = cfg["gates"]
    for key in ("chi2_quantile", "ztest_quantile"):
        q = _as_number(gates.get(key))
        if q is None or not 0.0 < q < 1.0:
            out.append(f"gates.{key}: must lie in (0, 1)")
    _check_positive(out, gates, "d_min_px", "gates", strict=False)
    bounds = gates.get("aspect_ratio_bounds", {})
    if isinstance(bounds, dict):
        for label, pair in bounds.items():
            if (
                not isinstance(pair, (list, tuple))
                or len(pair) != 2
                or _as_number(pair[0]) is None
                or _as_number(pair[1]) is None
                or not float(pair[0]) < float(pair[1])
            ):
                out.append(f"gates.aspect_ratio_bounds.{label}: needs gamma_min < gamma_max")
    else:
        out.append("gates.aspect_ratio_bounds: must be a mapping")

    tracker_cfg = cfg["tracker"]
    for key in ("redetect_period_frames", "redetect_hard_fail_frames"):
        v = tracker_cfg.get(key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            out.append(f"tracker.{key}: must be a positive integer")
    _check_positive(out, tracker_cfg, "uncertainty_trace_max", "tracker")

    _check_positive(out, cfg, "rate_hz", "scenario")

    source = cfg["source"]
    if source.get("mode") not in ("synthetic", "recorded"):
        out.append("source.mode: must be 'synthetic' or 'recorded'")
    elif source.get("mode") == "recorded" and not source.get("path"):
        out.append("source.path: required when source.mode is 'recorded'")

    return out


def validate_file(path) -> list[str]:
    """Schema-check a scenario file; returns all violations found."""
    resolved = _resolve(_read_yaml(Path(path)))
    return _validate_resolved(resolved, _read_yaml(Path(path)))


def _build_pose(knot: dict) -> Pose:
    rpy = knot.get("rpy_deg", [0.0, 0.0, 0.0])
    rotation = Quaternion.from_rpy(*(math.radians(float(v)) for v in rpy))
    return Pose(rotation, np.asarray(knot["pos_m"], dtype=float))


def load_bundle(path) -> ScenarioBundle:
    """Load, validate, and construct the runtime objects for a scenario file."""
    path = Path(path)
    raw = _read_yaml(path)
    resolved = _resolve(raw)
    violations = _validate_resolved(resolved, raw)
    if violations:
        raise ConfigError(
            f"{path} has {len(violations)} violation(s):\n  " + "\n  ".join(violations)
        )

    cam_cfg = resolved["camera"]
    camera = CameraModel(
        fx=float(cam_cfg["fx_px"]),
        fy=float(cam_cfg["fy_px"]),
        cx=float(cam_cfg["cx_px"]),
        cy=float(cam_cfg["cy_px"]),
        width=float(cam_cfg["width_px"]),
        height=float(cam_cfg["height_px"]),
    )

    obj_cfg = resolved["object"]
    extent = np.asarray(obj_cfg["extent_m"], dtype=float)
    if obj_cfg.get("vertices_m") is not None:
        verts = VertexSet(np.asarray(obj_cfg["vertices_m"], dtype=float))
    else:
        verts = make_shape(obj_cfg["shape"], extent)
    pn = obj_cfg["process_noise"]
    dynamics = DynamicsSpec(
        model=obj_cfg["dynamics_model"],
        process_noise=block_process_noise(pn["pos"], pn["vel"], pn["rot"], pn["omega"]),
    )
    init_rpy = obj_cfg.get("init_orientation_rpy_deg")
    init_orientation = (
        None
        if init_rpy is None
        else Quaternion.from_rpy(*(math.radians(float(v)) for v in init_rpy))
    )
    model = ObjectModel(
        class_label=obj_cfg["class_label"],
        verts=verts,
        extent=extent,
        dynamics=dynamics,
        symmetry_axis=obj_cfg.get("symmetry_axis"),
        init_orientation=init_orientation,
    )

    trajectory = tuple(
        (float(knot["t_s"]), _build_pose(knot)) for knot in resolved["trajectory"]
    )
    noise_cfg = resolved["noise"]
    noise = NoiseSpec(
        pixel_sigma=noise_cfg["pixel_sigma_px"],
        size_sigma_frac=noise_cfg["size_sigma_frac"],
        alpha_sigma=noise_cfg["alpha_sigma_rad"],
        tracker_drift_rate=noise_cfg["tracker_drift_px_per_frame"],
        detection_dropout=noise_cfg["detection_dropout"],
        init_translation_noise=noise_cfg["init_translation_noise_m"],
        init_box_noise_frac=noise_cfg["init_box_noise_frac"],
        distractor_rate=noise_cfg["distractor_rate"],
    )
    events = tuple(
        Event(
            kind=EventKind(ev["kind"]),
            start_t=float(ev["start_t_s"]),
            end_t=float(ev["end_t_s"]),
            offset=np.asarray(ev.get("offset_m", [1.0, 0.0, 0.0]), dtype=float),
        )
        for ev in resolved["events"]
    )
    try:
        scenario = Scenario(
            camera=camera,
            target=model,
            trajectory=trajectory,
            noise=noise,
            events=events,
            rate_hz=float(resolved["rate_hz"]),
            name=str(resolved["name"]) or path.stem,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    ukf_cfg = resolved["ukf"]
    ms = ukf_cfg["measurement_sigma"]
    ukf_params = UkfParams(
        alpha=float(ukf_cfg["alpha"]),
        beta=float(ukf_cfg["beta"]),
        kappa=float(ukf_cfg["kappa"]),
        measurement_noise=np.array(
            [
                float(ms["center_px"]) ** 2,
                float(ms["center_px"]) ** 2,
                float(ms["size_px"]) ** 2,
                float(ms["size_px"]) ** 2,
                float(ms["alpha_rad"]) ** 2,
            ]
        ),
    )
    gates_cfg = resolved["gates"]
    gates = GateConfig(
        chi2_quantile=float(gates_cfg["chi2_quantile"]),
        ztest_quantile=float(gates_cfg["ztest_quantile"]),
        d_min=float(gates_cfg["d_min_px"]),
        aspect_ratio_bounds={
            str(label): (float(pair[0]), float(pair[1]))
            for label, pair in gates_cfg["aspect_ratio_bounds"].items()
        },
    )
    init_cfg = resolved["init"]
    tracker_cfg = TrackerConfig(
        model=model,
        camera=camera,
        ukf=ukf_params,
        gates=gates,
        redetect_period=int(resolved["tracker"]["redetect_period_frames"]),
        redetect_hard_fail=int(resolved["tracker"]["redetect_hard_fail_frames"]),
        uncertainty_trace_max=float(resolved["tracker"]["uncertainty_trace_max"]),
        init_pos_sigma=np.asarray(init_cfg["pos_sigma_m"], dtype=float),
        init_vel_sigma=float(init_cfg["vel_sigma_mps"]),
        init_rot_sigma=float(init_cfg["rot_sigma_rad"]),
        init_omega_sigma=float(init_cfg["omega_sigma_radps"]),
    )

    source_cfg = resolved["source"]
    recorded_path = None
    if source_cfg["mode"] == "recorded":
        recorded_path = (path.parent / source_cfg["path"]).resolve()

    return ScenarioBundle(
        scenario=scenario,
        tracker_cfg=tracker_cfg,
        init_mode=init_cfg["mode"],
        source_mode=source_cfg["mode"],
        recorded_path=recorded_path,
        resolved=resolved,
    )
