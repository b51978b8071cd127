"""Unscented Kalman filter over the rigid-body state.

The belief keeps a 13-component mean (quaternion orientation) and a 12x12
covariance over the error axes [dp, dv, dtheta, domega]; sigma points move
between the two with the boxplus/boxminus pair from :mod:`geometry`.  Each
update also produces the predicted-measurement mean and covariance that the
gating layer consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsSpec, RigidBodyState, propagate
from .geometry import (
    DEPTH_EPSILON,
    AngledBox,
    CameraModel,
    DegenerateGeometryError,
    VertexSet,
    min_area_rect,
    quat_boxminus,
    quat_boxplus,
)

__all__ = [
    "ERROR_DIM",
    "MEASUREMENT_DIM",
    "CholeskyFailureError",
    "InnovationNotPSDError",
    "MeasurementStats",
    "MeasurementUndefinedError",
    "StateBelief",
    "UkfParams",
    "predict",
    "sigma_points",
    "state_boxminus",
    "state_boxplus",
    "update",
    "wrap_alpha_residual",
]

ERROR_DIM = 12
MEASUREMENT_DIM = 5

_POS = slice(0, 3)
_VEL = slice(3, 6)
_ROT = slice(6, 9)
_OMEGA = slice(9, 12)

_QUARTER_PI = 0.25 * math.pi
_HALF_PI = 0.5 * math.pi

# Added to the innovation covariance diagonal before inversion.
_INNOVATION_JITTER = 1e-9
_MAX_CONDITION = 1e12


class CholeskyFailureError(RuntimeError):
    """Covariance could not be factorized even after regularization."""


class MeasurementUndefinedError(RuntimeError):
    """A sigma point has no defined measurement (behind camera or degenerate)."""


class InnovationNotPSDError(RuntimeError):
    """Innovation covariance stayed ill-conditioned after regularization."""


@dataclass(frozen=True, eq=False)
class UkfParams:
    """Sigma-point spread parameters and the measurement noise diagonal.

    The measurement noise entries are variances for [x, y, w, h, alpha] in
    px^2, px^2, px^2, px^2, rad^2.
    """

    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0
    measurement_noise: np.ndarray = field(
        default_factory=lambda: np.array([4.0, 4.0, 16.0, 16.0, 0.0025])
    )

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        if self.kappa < 0.0:
            raise ValueError("kappa must be >= 0")
        r = np.asarray(self.measurement_noise, dtype=float).reshape(MEASUREMENT_DIM)
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("measurement noise variances must be finite and >= 0")
        object.__setattr__(self, "measurement_noise", r)

    def scaling(self, n: int = ERROR_DIM) -> float:
        return self.alpha * self.alpha * (n + self.kappa) - n


@dataclass(frozen=True, eq=False)
class StateBelief:
    """Gaussian belief: rigid-body mean plus error-state covariance."""

    mean: RigidBodyState
    cov: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cov, dtype=float).reshape(ERROR_DIM, ERROR_DIM)
        object.__setattr__(self, "cov", 0.5 * (c + c.T))


@dataclass(frozen=True, eq=False)
class MeasurementStats:
    """Predicted measurement distribution (z_hat, S_hat) from the sigma set."""

    z_hat: np.ndarray
    s_hat: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z_hat, dtype=float).reshape(MEASUREMENT_DIM)
        s = np.asarray(self.s_hat, dtype=float).reshape(MEASUREMENT_DIM, MEASUREMENT_DIM)
        object.__setattr__(self, "z_hat", z)
        object.__setattr__(self, "s_hat", 0.5 * (s + s.T))


def state_boxplus(state: RigidBodyState, delta: np.ndarray) -> RigidBodyState:
    d = np.asarray(delta, dtype=float).reshape(ERROR_DIM)
    return RigidBodyState(
        state.position + d[_POS],
        state.velocity + d[_VEL],
        quat_boxplus(state.orientation, d[_ROT]),
        state.angular_velocity + d[_OMEGA],
    )


def state_boxminus(a: RigidBodyState, b: RigidBodyState) -> np.ndarray:
    out = np.empty(ERROR_DIM)
    out[_POS] = a.position - b.position
    out[_VEL] = a.velocity - b.velocity
    out[_ROT] = quat_boxminus(a.orientation, b.orientation)
    out[_OMEGA] = a.angular_velocity - b.angular_velocity
    return out


def wrap_alpha_residual(a: float, b: float) -> float:
    """Smallest box-angle difference under the 90-degree swap equivalence."""
    r = (float(a) - float(b) + _QUARTER_PI) % _HALF_PI - _QUARTER_PI
    if r >= _QUARTER_PI:
        r -= _HALF_PI
    return r


def _safe_cholesky(matrix: np.ndarray) -> np.ndarray:
    scale = max(float(np.trace(matrix)) / matrix.shape[0], 1.0)
    eye = np.eye(matrix.shape[0])
    for jitter in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            return np.linalg.cholesky(matrix + jitter * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise CholeskyFailureError("covariance is not decomposable after regularization")


def sigma_points(
    belief: StateBelief, params: UkfParams
) -> tuple[list[RigidBodyState], np.ndarray, np.ndarray]:
    """Scaled unscented transform sigma set: 2n+1 states and weight vectors."""
    n = ERROR_DIM
    lam = params.scaling(n)
    root = _safe_cholesky(belief.cov)
    spread = math.sqrt(n + lam)
    states = [belief.mean]
    for j in range(n):
        col = spread * root[:, j]
        states.append(state_boxplus(belief.mean, col))
        states.append(state_boxplus(belief.mean, -col))
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = lam / (n + lam) + 1.0 - params.alpha * params.alpha + params.beta
    return states, wm, wc


def _mean_state(states: list[RigidBodyState], weights: np.ndarray) -> RigidBodyState:
    pos = weights @ np.array([s.position for s in states])
    vel = weights @ np.array([s.velocity for s in states])
    omega = weights @ np.array([s.angular_velocity for s in states])
    q = states[0].orientation
    for _ in range(10):
        err = np.zeros(3)
        for s, w in zip(states, weights):
            err += w * quat_boxminus(s.orientation, q)
        q = quat_boxplus(q, err)
        if float(np.linalg.norm(err)) < 1e-10:
            break
    return RigidBodyState(pos, vel, q, omega)


def _deviations(states: list[RigidBodyState], mean: RigidBodyState) -> np.ndarray:
    return np.array([state_boxminus(s, mean) for s in states])


def predict(
    belief: StateBelief, dt: float, spec: DynamicsSpec, params: UkfParams
) -> StateBelief:
    """Propagate the belief by dt; process noise * dt joins the diagonal."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    states, wm, wc = sigma_points(belief, params)
    propagated = [propagate(s, dt, spec) for s in states]
    mean = _mean_state(propagated, wm)
    dev = _deviations(propagated, mean)
    cov = dev.T @ (wc[:, None] * dev) + np.diag(spec.process_noise * dt)
    return StateBelief(mean, cov)


def _sigma_measurements(
    states: list[RigidBodyState], camera: CameraModel, verts: VertexSet
) -> np.ndarray:
    """Measurement of every sigma state; one batched projection, then the
    same min-area rectangle as predict_measurement per state."""
    pts = verts.points
    rot = np.array([s.orientation.rotation_matrix() for s in states])
    cam_pts = np.einsum("sij,nj->sni", rot, pts)
    cam_pts += np.array([s.position for s in states])[:, None, :]
    depth = cam_pts[..., 2]
    if np.any(depth <= DEPTH_EPSILON):
        raise MeasurementUndefinedError(
            f"sigma vertex at depth {float(depth.min()):.6g} m is at or behind the camera"
        )
    u = camera.fx * cam_pts[..., 0] / depth + camera.cx
    v = camera.fy * cam_pts[..., 1] / depth + camera.cy
    zs = np.empty((len(states), MEASUREMENT_DIM))
    try:
        for i in range(len(states)):
            zs[i] = min_area_rect(np.stack([u[i], v[i]], axis=1)).as_vector()
    except DegenerateGeometryError as exc:
        raise MeasurementUndefinedError(str(exc)) from exc
    return zs


def update(
    belief: StateBelief,
    z: AngledBox,
    camera: CameraModel,
    verts: VertexSet,
    params: UkfParams,
) -> tuple[StateBelief, MeasurementStats]:
    """Fuse one angled-box measurement; returns the posterior and (z_hat, S_hat).

    Raises MeasurementUndefinedError when any sigma point projects behind the
    camera or degenerately; callers treat that as track loss rather than
    clamping the sigma set.
    """
    states, wm, wc = sigma_points(belief, params)
    zs = _sigma_measurements(states, camera, verts)

    z_hat = np.empty(MEASUREMENT_DIM)
    z_hat[:4] = wm @ zs[:, :4]
    ref = zs[0, 4]
    z_hat[4] = ref + float(
        wm @ np.array([wrap_alpha_residual(a, ref) for a in zs[:, 4]])
    )

    dz = zs - z_hat
    dz[:, 4] = [wrap_alpha_residual(a, z_hat[4]) for a in zs[:, 4]]
    s_hat = (
        dz.T @ (wc[:, None] * dz)
        + np.diag(params.measurement_noise)
        + _INNOVATION_JITTER * np.eye(MEASUREMENT_DIM)
    )
    s_hat = 0.5 * (s_hat + s_hat.T)
    if np.linalg.cond(s_hat) > _MAX_CONDITION:
        raise InnovationNotPSDError("innovation covariance is ill-conditioned")

    dx = _deviations(states, belief.mean)
    cross = dx.T @ (wc[:, None] * dz)
    gain = np.linalg.solve(s_hat, cross.T).T

    residual = z.as_vector() - z_hat
    residual[4] = wrap_alpha_residual(z.alpha, z_hat[4])

    mean = state_boxplus(belief.mean, gain @ residual)
    cov = belief.cov - gain @ s_hat @ gain.T
    return StateBelief(mean, cov), MeasurementStats(z_hat, s_hat)
