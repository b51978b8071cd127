"""Vertex-set factories for the object shapes shipped with the simulator.

Object frame convention: x spans the width, y the height, z the length, all
centered on the origin.  ``extent`` is always (width, height, length) in
meters.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import VertexSet

__all__ = ["SHAPE_FACTORIES", "box_vertices", "laptop_vertices", "make_shape", "rimmed_vertices"]


def box_vertices(extent) -> VertexSet:
    """The 8 corners of the extent box."""
    w, h, l = (float(v) for v in extent)
    xs = (-0.5 * w, 0.5 * w)
    ys = (-0.5 * h, 0.5 * h)
    zs = (-0.5 * l, 0.5 * l)
    pts = [(x, y, z) for x in xs for y in ys for z in zs]
    return VertexSet(np.array(pts))


def laptop_vertices(extent, base_height_frac: float = 0.35, lid_thickness_frac: float = 0.12) -> VertexSet:
    """12 points forming an L profile: a flat base slab plus a raised lid at the rear.

    The side view has 6 corners; mirrored across both side faces gives 12.
    """
    w, h, l = (float(v) for v in extent)
    b = base_height_frac * h  # base slab thickness
    t = lid_thickness_frac * l  # lid thickness along z
    # (z, y) profile, y grows downward in the image when upright
    profile = [
        (-0.5 * l, 0.5 * h),
        (0.5 * l, 0.5 * h),
        (0.5 * l, -0.5 * h),
        (0.5 * l - t, -0.5 * h),
        (0.5 * l - t, 0.5 * h - b),
        (-0.5 * l, 0.5 * h - b),
    ]
    pts = [(x, y, z) for x in (-0.5 * w, 0.5 * w) for z, y in profile]
    return VertexSet(np.array(pts))


def rimmed_vertices(extent, rim_points: int = 8) -> VertexSet:
    """Extent box plus points around the top rim circle for curved-rim objects."""
    w, h, l = (float(v) for v in extent)
    radius = 0.5 * min(w, l)
    rim = [
        (radius * math.cos(2.0 * math.pi * k / rim_points), -0.5 * h,
         radius * math.sin(2.0 * math.pi * k / rim_points))
        for k in range(rim_points)
    ]
    return VertexSet(np.vstack([box_vertices(extent).points, np.array(rim)]))


SHAPE_FACTORIES = {
    "box": box_vertices,
    "laptop": laptop_vertices,
    "rimmed": rimmed_vertices,
}


def make_shape(name: str, extent) -> VertexSet:
    try:
        factory = SHAPE_FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPE_FACTORIES)}") from None
    return factory(extent)
