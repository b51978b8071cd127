"""Rigid-body state and the propagation models used by the filter predict step.

Models live in a registry keyed by name so scenario configs can select
class-specific dynamics; only the constant-velocity model ships built in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import Pose, Quaternion, quat_boxplus

__all__ = [
    "CONSTANT_VELOCITY",
    "DuplicateModelError",
    "DynamicsSpec",
    "RigidBodyState",
    "UnknownModelError",
    "block_process_noise",
    "propagate",
    "register_model",
    "registered_models",
]

CONSTANT_VELOCITY = "constant_velocity"


class UnknownModelError(LookupError):
    """A dynamics spec referenced a model name that was never registered."""


class DuplicateModelError(ValueError):
    """Attempted to register a dynamics model under a name already in use."""


@dataclass(frozen=True, eq=False)
class RigidBodyState:
    """Position, velocity, orientation, and angular velocity of the target."""

    position: np.ndarray
    velocity: np.ndarray
    orientation: Quaternion
    angular_velocity: np.ndarray

    def __post_init__(self):
        for name in ("position", "velocity", "angular_velocity"):
            v = getattr(self, name)
            if not (isinstance(v, np.ndarray) and v.dtype == np.float64 and v.shape == (3,)):
                v = np.asarray(v, dtype=float).reshape(3)
                object.__setattr__(self, name, v)
            # the sum is non-finite iff any component is
            if not math.isfinite(float(v[0]) + float(v[1]) + float(v[2])):
                raise ValueError(f"{name} must be finite")

    def pose(self) -> Pose:
        return Pose(self.orientation, self.position)

    def as_vector(self) -> np.ndarray:
        q = self.orientation
        return np.concatenate(
            [self.position, self.velocity, [q.w, q.x, q.y, q.z], self.angular_velocity]
        )

    @staticmethod
    def at_rest(pose: Pose) -> "RigidBodyState":
        return RigidBodyState(pose.translation, np.zeros(3), pose.rotation, np.zeros(3))


def block_process_noise(pos: float, vel: float, rot: float, omega: float) -> np.ndarray:
    """Expand per-block noise densities into the 12-vector over error axes."""
    return np.repeat([float(pos), float(vel), float(rot), float(omega)], 3)


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """Which propagation model to use and its error-state noise densities."""

    model: str = CONSTANT_VELOCITY
    process_noise: np.ndarray = field(
        default_factory=lambda: block_process_noise(1e-6, 1e-2, 1e-5, 1e-3)
    )

    def __post_init__(self):
        q = np.asarray(self.process_noise, dtype=float).reshape(12)
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("process noise densities must be finite and >= 0")
        object.__setattr__(self, "process_noise", q)


TransitionFn = Callable[[RigidBodyState, float], RigidBodyState]

_MODELS: dict[str, TransitionFn] = {}


def register_model(name: str, transition: TransitionFn) -> str:
    """Register a named state-transition function; returns the name."""
    if name in _MODELS:
        raise DuplicateModelError(f"dynamics model {name!r} is already registered")
    _MODELS[name] = transition
    return name


def registered_models() -> tuple[str, ...]:
    return tuple(sorted(_MODELS))


def _constant_velocity(state: RigidBodyState, dt: float) -> RigidBodyState:
    return RigidBodyState(
        state.position + state.velocity * dt,
        state.velocity,
        quat_boxplus(state.orientation, state.angular_velocity * dt),
        state.angular_velocity,
    )


register_model(CONSTANT_VELOCITY, _constant_velocity)


def propagate(state: RigidBodyState, dt: float, spec: DynamicsSpec) -> RigidBodyState:
    """Advance the state by dt seconds using the spec's model."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    try:
        transition = _MODELS[spec.model]
    except KeyError:
        raise UnknownModelError(f"no dynamics model named {spec.model!r}") from None
    out = transition(state, float(dt))
    return RigidBodyState(
        out.position, out.velocity, out.orientation.normalized(), out.angular_velocity
    )
