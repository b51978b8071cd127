"""Rigid-body math, pinhole projection, and 2D enclosing-rectangle geometry.

Everything in this module is a pure function of its inputs.  The central
composition is :func:`predict_measurement`, which projects an object's vertex
set through a pinhole camera and wraps the pixels in the minimum-area angled
rectangle; that rectangle is the measurement the filter reasons about.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEPTH_EPSILON",
    "AngledBox",
    "AxisAlignedBox",
    "BehindCameraError",
    "CameraModel",
    "DegenerateGeometryError",
    "Pose",
    "Quaternion",
    "VertexSet",
    "convex_hull",
    "min_area_rect",
    "predict_measurement",
    "project_points",
    "quat_boxminus",
    "quat_boxplus",
    "quat_multiply",
    "slerp",
    "to_axis_aligned",
]

# Camera-frame depth (meters) at or below this counts as behind the camera.
DEPTH_EPSILON = 1e-3

_HALF_PI = 0.5 * math.pi
_QUARTER_PI = 0.25 * math.pi


class BehindCameraError(ValueError):
    """A vertex sits at or behind the camera's image plane."""


class DegenerateGeometryError(ValueError):
    """2D points collapse to a segment or a single point.

    ``points`` carries the collapsed geometry (segment endpoints, or the
    single point) so callers can report what they rejected.
    """

    def __init__(self, message: str, points=None):
        super().__init__(message)
        self.points = None if points is None else np.asarray(points, dtype=float)


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z); normalization keeps w >= 0."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "Quaternion":
        ax = np.asarray(axis, dtype=float)
        n = float(np.linalg.norm(ax))
        if n == 0.0:
            raise ValueError("rotation axis must be nonzero")
        half = 0.5 * float(angle)
        s = math.sin(half) / n
        return Quaternion(math.cos(half), ax[0] * s, ax[1] * s, ax[2] * s).normalized()

    @staticmethod
    def from_rotation_vector(vec) -> "Quaternion":
        """Exponential map of a rotation vector (axis * angle)."""
        v = np.asarray(vec, dtype=float)
        angle = float(np.linalg.norm(v))
        if angle < 1e-12:
            s = 0.5 - angle * angle / 48.0
            return Quaternion(1.0 - angle * angle / 8.0, v[0] * s, v[1] * s, v[2] * s).normalized()
        s = math.sin(0.5 * angle) / angle
        return Quaternion(math.cos(0.5 * angle), v[0] * s, v[1] * s, v[2] * s).normalized()

    @staticmethod
    def from_rpy(roll: float, pitch: float, yaw: float) -> "Quaternion":
        """Extrinsic x-y-z rotation: yaw about z, then pitch about y, then roll about x."""
        qz = Quaternion.from_axis_angle((0.0, 0.0, 1.0), yaw)
        qy = Quaternion.from_axis_angle((0.0, 1.0, 0.0), pitch)
        qx = Quaternion.from_axis_angle((1.0, 0.0, 0.0), roll)
        return quat_multiply(quat_multiply(qz, qy), qx)

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if not math.isfinite(n) or n == 0.0:
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        w, x, y, z = self.w, self.x, self.y, self.z
        # Skip the division when already unit so repeated normalization is
        # bit-stable; the 1e-12 slack keeps the 1e-9 unit-norm contract.
        if abs(n - 1.0) > 1e-12:
            w, x, y, z = w / n, x / n, y / n, z / n
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        return Quaternion(w, x, y, z)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ]
        )

    def rotate(self, v) -> np.ndarray:
        return self.rotation_matrix() @ np.asarray(v, dtype=float)


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product a * b, renormalized."""
    w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z
    x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y
    y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x
    z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if not math.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    if abs(n - 1.0) > 1e-12:
        w, x, y, z = w / n, x / n, y / n, z / n
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    return Quaternion(w, x, y, z)


def quat_boxplus(q: Quaternion, delta) -> Quaternion:
    """Compose q with the exponential map of a body-frame rotation vector."""
    return quat_multiply(q, Quaternion.from_rotation_vector(delta))


def quat_boxminus(a: Quaternion, b: Quaternion) -> np.ndarray:
    """Rotation vector d with a = b (+) d; magnitude in [0, pi]."""
    r = quat_multiply(b.conjugate(), a)
    n = math.sqrt(r.x * r.x + r.y * r.y + r.z * r.z)
    if n < 1e-12:
        scale = 2.0 / r.w * (1.0 - n * n / (3.0 * r.w * r.w))
    else:
        scale = 2.0 * math.atan2(n, r.w) / n
    return np.array([r.x * scale, r.y * scale, r.z * scale])


def slerp(a: Quaternion, b: Quaternion, u: float) -> Quaternion:
    """Geodesic interpolation from a (u=0) to b (u=1) along the shortest arc."""
    return quat_boxplus(a, float(u) * quat_boxminus(b, a))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform from object frame to camera frame."""

    rotation: Quaternion
    translation: np.ndarray

    def __post_init__(self):
        t = self.translation
        if not (isinstance(t, np.ndarray) and t.dtype == np.float64 and t.shape == (3,)):
            t = np.asarray(t, dtype=float).reshape(3)
            object.__setattr__(self, "translation", t)
        if not math.isfinite(float(t[0]) + float(t[1]) + float(t[2])):
            raise ValueError("pose translation must be finite")
        object.__setattr__(self, "rotation", self.rotation.normalized())

    def transform(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.rotation_matrix().T + self.translation


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus image size, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")

    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class VertexSet:
    """Object-frame 3D points whose projection the measurement encloses."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("vertex set must be an (n, 3) array")
        if pts.shape[0] < 4:
            raise ValueError("vertex set needs at least 4 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("vertices must be finite")
        centered = pts - pts.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[1] <= 1e-9 * max(sv[0], 1.0):
            raise ValueError("vertices collapse to a line")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def _normalize_alpha_halfpi(alpha: float) -> float:
    a = (alpha + _HALF_PI) % math.pi - _HALF_PI
    if a >= _HALF_PI:  # float modulo can land exactly on pi
        a -= math.pi
    return a


@dataclass(frozen=True)
class AngledBox:
    """Rotated rectangle: center (x, y), size (w, h), angle alpha (radians).

    Construction enforces the canonical form h <= w with alpha in
    [-pi/2, pi/2); exact squares reduce alpha further to [-pi/4, pi/4).
    """

    x: float
    y: float
    w: float
    h: float
    alpha: float = 0.0

    def __post_init__(self):
        x, y = float(self.x), float(self.y)
        w, h, a = float(self.w), float(self.h), float(self.alpha)
        if h > w:
            w, h = h, w
            a += _HALF_PI
        a = _normalize_alpha_halfpi(a)
        if w == h:
            a = (a + _QUARTER_PI) % _HALF_PI - _QUARTER_PI
            if a >= _QUARTER_PI:
                a -= _HALF_PI
        if not (w > 0.0 and h > 0.0):
            raise ValueError("box width and height must be positive")
        if not all(math.isfinite(v) for v in (x, y, w, h, a)):
            raise ValueError("box parameters must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "alpha", a)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h, self.alpha])

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.alpha), math.sin(self.alpha)
        hw, hh = 0.5 * self.w, 0.5 * self.h
        local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])


@dataclass(frozen=True)
class AxisAlignedBox:
    """Axis-aligned rectangle: center (x, y) and size (w, h), in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0.0 and self.h > 0.0):
            raise ValueError("box width and height must be positive")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError("box parameters must be finite")

    @property
    def left(self) -> float:
        return self.x - 0.5 * self.w

    @property
    def right(self) -> float:
        return self.x + 0.5 * self.w

    @property
    def top(self) -> float:
        return self.y - 0.5 * self.h

    @property
    def bottom(self) -> float:
        return self.y + 0.5 * self.h

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h, 0.0])

    def as_angled(self) -> AngledBox:
        return AngledBox(self.x, self.y, self.w, self.h, 0.0)


def project_points(camera: CameraModel, pose: Pose, verts) -> np.ndarray:
    """Pinhole-project object-frame vertices; (n, 2) pixel coordinates.

    Raises BehindCameraError if any transformed vertex has camera-frame
    depth <= DEPTH_EPSILON.
    """
    pts = verts.points if isinstance(verts, VertexSet) else np.asarray(verts, dtype=float)
    cam = pts @ pose.rotation.rotation_matrix().T + pose.translation
    depth = cam[:, 2]
    if np.any(depth <= DEPTH_EPSILON):
        raise BehindCameraError(
            f"vertex at depth {float(depth.min()):.6g} m is at or behind the camera"
        )
    u = camera.fx * cam[:, 0] / depth + camera.cx
    v = camera.fy * cam[:, 1] / depth + camera.cy
    return np.column_stack([u, v])


def _hull_chain(points) -> list[tuple[float, float]]:
    seq = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(seq) == 1:
        raise DegenerateGeometryError("all points coincide", points=seq)
    if len(seq) == 2:
        raise DegenerateGeometryError("points span only a segment", points=seq)

    lower: list[tuple[float, float]] = []
    for p in seq:
        while (
            len(lower) >= 2
            and (lower[-1][0] - lower[-2][0]) * (p[1] - lower[-2][1])
            - (lower[-1][1] - lower[-2][1]) * (p[0] - lower[-2][0])
            <= 0.0
        ):
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(seq):
        while (
            len(upper) >= 2
            and (upper[-1][0] - upper[-2][0]) * (p[1] - upper[-2][1])
            - (upper[-1][1] - upper[-2][1]) * (p[0] - upper[-2][0])
            <= 0.0
        ):
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("points are collinear", points=[seq[0], seq[-1]])
    return hull


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise convex hull (monotone chain), no collinear vertices.

    Raises DegenerateGeometryError when the points collapse to a segment or
    a single point; the exception carries the collapsed geometry.
    """
    return np.array(_hull_chain(np.asarray(points, dtype=float).reshape(-1, 2)))


def min_area_rect(points) -> AngledBox:
    """Minimum-area enclosing rectangle via rotating calipers over hull edges.

    Area ties (within 1e-12 relative) break toward the smallest |alpha| of
    the canonical box representation.
    """
    if isinstance(points, np.ndarray):
        hull = _hull_chain(points.reshape(-1, 2))
    else:
        hull = _hull_chain(points)
    best_box = None
    best_area = math.inf
    k = len(hull)
    for i in range(k):
        px, py = hull[i]
        qx, qy = hull[(i + 1) % k]
        ex, ey = qx - px, qy - py
        length = math.hypot(ex, ey)
        ux, uy = ex / length, ey / length
        xmin = xmax = px * ux + py * uy
        ymin = ymax = -px * uy + py * ux
        for hx, hy in hull:
            xs = hx * ux + hy * uy
            ys = -hx * uy + hy * ux
            if xs < xmin:
                xmin = xs
            elif xs > xmax:
                xmax = xs
            if ys < ymin:
                ymin = ys
            elif ys > ymax:
                ymax = ys
        w = xmax - xmin
        h = ymax - ymin
        area = w * h
        if area >= best_area * (1.0 + 1e-12) and best_box is not None:
            continue
        mx = 0.5 * (xmin + xmax)
        my = 0.5 * (ymin + ymax)
        box = AngledBox(ux * mx - uy * my, uy * mx + ux * my, w, h, math.atan2(uy, ux))
        if best_box is None or area < best_area * (1.0 - 1e-12):
            best_box, best_area = box, area
        elif abs(box.alpha) < abs(best_box.alpha):
            # tie on area within tolerance
            best_box, best_area = box, min(area, best_area)
    return best_box


def predict_measurement(camera: CameraModel, pose: Pose, verts: VertexSet) -> AngledBox:
    """Measurement model: min-area angled box around the projected vertices."""
    return min_area_rect(project_points(camera, pose, verts))


def to_axis_aligned(box: AngledBox) -> AxisAlignedBox:
    """Tight axis-aligned bounds of an angled box's four corners."""
    c = box.corners()
    lo = c.min(axis=0)
    hi = c.max(axis=0)
    return AxisAlignedBox(
        0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), hi[0] - lo[0], hi[1] - lo[1]
    )
