"""Synthetic optimization landscapes used for engine acceptance, plus a 2-D
hypervolume metric for judging front quality."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .space import BlockSpec, LatentSpaceSpec

__all__ = [
    "sphere",
    "zdt1",
    "sphere_space",
    "zdt1_space",
    "hypervolume_2d",
]


def sphere(z: Sequence[float]) -> float:
    """Squared Euclidean norm; global minimum 0 at the origin."""
    z = np.asarray(z, dtype=np.float64)
    return float(np.dot(z, z))


def zdt1(x: Sequence[float]) -> tuple[float, float]:
    """Two-objective ZDT1 on [0, 1]^n with convex front f2 = 1 - sqrt(f1)."""
    x = np.asarray(x, dtype=np.float64)
    f1 = float(x[0])
    g = 1.0 + 9.0 * float(x[1:].sum()) / (len(x) - 1)
    f2 = g * (1.0 - np.sqrt(f1 / g))
    return f1, float(f2)


def sphere_space(dim: int) -> LatentSpaceSpec:
    """Unbounded standard-normal reals matching the sphere landscape."""
    return LatentSpaceSpec((BlockSpec.reals(dim, mean=0.0, stddev=1.0),))


def zdt1_space(dim: int) -> LatentSpaceSpec:
    """Reals truncated to [0, 1].

    A wide truncated normal (stddev 2 around 0.5) makes the rejection-based
    initialization close to uniform over the unit box.
    """
    return LatentSpaceSpec((BlockSpec.reals(dim, mean=0.5, stddev=2.0, bounds=(0.0, 1.0)),))


def hypervolume_2d(points: Sequence[Sequence[float]], reference: Sequence[float]) -> float:
    """Area dominated by a 2-objective front, measured against a reference
    point (minimization).  Points at or beyond the reference contribute
    nothing."""
    ref = np.asarray(reference, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    if ref.shape != (2,):
        raise ValueError("reference point must have exactly two components")
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    inside = pts[(pts[:, 0] < ref[0]) & (pts[:, 1] < ref[1])]
    if inside.shape[0] == 0:
        return 0.0
    order = np.lexsort((inside[:, 1], inside[:, 0]))
    inside = inside[order]
    area = 0.0
    best_f2 = ref[1]
    for f1, f2 in inside:
        if f2 >= best_f2:
            continue  # dominated by an earlier (lower f1) point
        area += (ref[0] - f1) * (best_f2 - f2)
        best_f2 = f2
    return float(area)
