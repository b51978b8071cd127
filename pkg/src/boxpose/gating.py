"""Measurement verification gates.

Four independent checks decide whether a box measurement is trustworthy:
the Mahalanobis/chi-squared consistency gate against the filter's predicted
measurement distribution, one-sided z-tests that the box stays clear of each
image edge, a class aspect-ratio range, and a minimum pixel distance from
the image border.  All functions here are pure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .geometry import AxisAlignedBox, CameraModel
from .ukf import MeasurementStats, wrap_alpha_residual

__all__ = [
    "EdgeTests",
    "GateConfig",
    "SingularCovarianceError",
    "aspect_ratio_gate",
    "chi2_gate",
    "chi2_threshold",
    "edge_distance_gate",
    "edge_ztest",
    "mahalanobis",
    "normal_quantile",
]

logger = logging.getLogger(__name__)

_warned_labels: set[str] = set()


class SingularCovarianceError(RuntimeError):
    """The measurement covariance could not be inverted."""


@dataclass(frozen=True, eq=False)
class GateConfig:
    """Thresholds for all measurement gates.

    ``aspect_ratio_bounds`` maps class label to (gamma_min, gamma_max); a
    label without bounds passes the aspect gate with a one-time warning.
    """

    chi2_quantile: float = 0.997
    ztest_quantile: float = 0.997
    d_min: float = 5.0
    aspect_ratio_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.chi2_quantile < 1.0 and 0.0 < self.ztest_quantile < 1.0):
            raise ValueError("gate quantiles must lie in (0, 1)")
        if self.d_min < 0.0:
            raise ValueError("d_min must be >= 0")
        for label, (lo, hi) in self.aspect_ratio_bounds.items():
            if not lo < hi:
                raise ValueError(f"aspect ratio bounds for {label!r} need min < max")


def _lower_regularized_gamma(s: float, x: float) -> float:
    """P(s, x): series expansion below s+1, Lentz continued fraction above."""
    if x <= 0.0:
        return 0.0
    log_prefactor = -x + s * math.log(x) - math.lgamma(s)
    if x < s + 1.0:
        term = 1.0 / s
        total = term
        k = s
        while abs(term) > abs(total) * 1e-16:
            k += 1.0
            term *= x / k
            total += term
        return min(total * math.exp(log_prefactor), 1.0)
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return max(1.0 - math.exp(log_prefactor) * h, 0.0)


@lru_cache(maxsize=None)
def chi2_threshold(quantile: float, dof: int) -> float:
    """Inverse chi-squared CDF: the squared-distance acceptance threshold.

    Solved by bisection on the regularized incomplete gamma to 1e-10 so the
    value can be cross-checked against an independent statistics oracle.
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    if dof < 1:
        raise ValueError("dof must be >= 1")
    s = 0.5 * dof

    def cdf(x: float) -> float:
        return _lower_regularized_gamma(s, 0.5 * x)

    hi = float(dof) + 1.0
    while cdf(hi) < quantile and hi < 1e10:
        hi *= 2.0
    lo = 0.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < quantile:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=None)
def normal_quantile(q: float) -> float:
    """Standard normal inverse CDF by bisection on erfc, to 1e-12."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must lie in (0, 1)")

    def cdf(x: float) -> float:
        return 0.5 * math.erfc(-x / math.sqrt(2.0))

    lo, hi = -40.0, 40.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mahalanobis(z, stats: MeasurementStats) -> float:
    """Covariance-weighted residual norm; the alpha component is wrapped."""
    zv = np.asarray(z, dtype=float).reshape(5)
    resid = zv - stats.z_hat
    resid[4] = wrap_alpha_residual(zv[4], stats.z_hat[4])
    try:
        sol = np.linalg.solve(stats.s_hat, resid)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("measurement covariance is singular") from exc
    if not np.all(np.isfinite(sol)) or np.linalg.cond(stats.s_hat) > 1e15:
        raise SingularCovarianceError("measurement covariance is numerically singular")
    return math.sqrt(max(float(resid @ sol), 0.0))


def chi2_gate(d: float, dof: int, cfg: GateConfig) -> bool:
    """Pass iff d^2 is within the chi-squared quantile for the given dof."""
    if d < 0:
        raise ValueError("distance must be >= 0")
    return d * d <= chi2_threshold(cfg.chi2_quantile, dof)


class EdgeTests(NamedTuple):
    left: bool
    top: bool
    right: bool
    bottom: bool


def edge_ztest(stats: MeasurementStats, camera: CameraModel, cfg: GateConfig) -> EdgeTests:
    """One-sided z-tests that each box extremity stays inside the image.

    The extremity along each image axis is the angled box's axis-aligned
    half extent; its variance comes from the S_hat diagonal by first-order
    propagation.  An edge fails when the crossing probability exceeds
    1 - ztest_quantile.
    """
    x, y, w, h, a = (float(v) for v in stats.z_hat)
    var = np.clip(np.diag(stats.s_hat), 0.0, None)
    c, s = math.cos(a), math.sin(a)
    ac, sa = abs(c), abs(s)
    sign_c = 1.0 if c >= 0 else -1.0
    sign_s = 1.0 if s >= 0 else -1.0

    half_x = 0.5 * (w * ac + h * sa)
    half_y = 0.5 * (w * sa + h * ac)
    dax = 0.5 * (-w * sign_c * s + h * sign_s * c)
    day = 0.5 * (w * sign_s * c - h * sign_c * s)
    var_half_x = 0.25 * (ac * ac * var[2] + sa * sa * var[3]) + dax * dax * var[4]
    var_half_y = 0.25 * (sa * sa * var[2] + ac * ac * var[3]) + day * day * var[4]
    sigma_x = math.sqrt(var[0] + var_half_x)
    sigma_y = math.sqrt(var[1] + var_half_y)

    need = normal_quantile(cfg.ztest_quantile)

    def clear(margin: float, sigma: float) -> bool:
        return margin > need * sigma if sigma > 0 else margin > 0

    return EdgeTests(
        left=clear(x - half_x, sigma_x),
        top=clear(y - half_y, sigma_y),
        right=clear(camera.width - (x + half_x), sigma_x),
        bottom=clear(camera.height - (y + half_y), sigma_y),
    )


def aspect_ratio_gate(box: AxisAlignedBox, class_label: str, cfg: GateConfig) -> bool:
    """Strict class-specific bounds on w/h; unknown classes pass with a warning."""
    bounds = cfg.aspect_ratio_bounds.get(class_label)
    if bounds is None:
        if class_label not in _warned_labels:
            _warned_labels.add(class_label)
            logger.warning("no aspect-ratio bounds for class %r; gate passes", class_label)
        return True
    lo, hi = bounds
    ratio = box.w / box.h
    return lo < ratio < hi


def edge_distance_gate(box: AxisAlignedBox, camera: CameraModel, cfg: GateConfig) -> bool:
    """Strictly keep the whole box at least d_min pixels from every edge."""
    d = cfg.d_min
    return (
        d < box.left
        and box.left < box.right
        and box.right < camera.width - d
        and d < box.top
        and box.top < box.bottom
        and box.bottom < camera.height - d
    )
