"""Seedable primitives shared by the trees, potentials and generators.

Random streams are keyed by ``(seed, path)``: the same seed and path always
produce the same draws, independently of the order in which streams are
created. Tree construction uses this to give every node its own stream.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

UNIT_NORM_TOL = 1e-9


class DimensionError(ValueError):
    pass


def rng_for(seed: int, path: Sequence[int] = ()) -> np.random.Generator:
    """Return a generator for the stream ``(seed, path)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, path: Sequence[int] = ()) -> int:
    """A 64-bit child seed for the stream ``(seed, path)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_points(points, d: int | None = None) -> np.ndarray:
    """Coerce to a finite 2-D float64 array, optionally checking the width.

    Anything with a ``points`` attribute (a Dataset) is unwrapped first.
    """
    arr = np.asarray(getattr(points, "points", points), dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array of points, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise DimensionError(f"points have dimension {arr.shape[1]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain NaN or infinite entries")
    return arr


def as_vector(v, d: int | None = None) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise DimensionError(f"vector has dimension {arr.shape[0]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains NaN or infinite entries")
    return arr


def random_unit_direction(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit sphere in R^d (normalized Gaussian)."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    while True:
        u = rng.standard_normal(d)
        norm = np.linalg.norm(u)
        if norm > 0.0:
            return u / norm


def random_unit_directions(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent unit directions as rows of a ``(count, d)`` array."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    u = rng.standard_normal((count, d))
    norms = np.linalg.norm(u, axis=1)
    # a zero Gaussian vector has probability zero; redraw to be safe
    bad = norms == 0.0
    while np.any(bad):
        u[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(u, axis=1)
        bad = norms == 0.0
    return u / norms[:, None]


def project(points, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[1] != u.shape[0]:
        raise DimensionError(
            f"points have dimension {pts.shape[1]}, direction has {u.shape[0]}")
    return pts @ u


def order_statistic(values, rank: int) -> float:
    """The ``rank``-th smallest value (1-indexed)."""
    vals = np.asarray(values, dtype=np.float64)
    n = vals.shape[0]
    if not 1 <= rank <= n:
        raise ValueError(f"rank {rank} outside [1, {n}]")
    return float(np.partition(vals, rank - 1)[rank - 1])


def fractile_rank(n: int, beta: float) -> int:
    # guard against beta*n landing a hair above an integer
    r = math.ceil(beta * n - 1e-12)
    return min(max(r, 1), n)


def fractile_value(values, beta: float) -> float:
    """Order statistic at rank ``ceil(beta * n)``; never interpolated.

    Splitting by strict ``< v`` therefore sends at most ``ceil(beta * n)``
    values to the left.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("fractile of an empty sequence")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    return order_statistic(vals, fractile_rank(vals.shape[0], beta))


def median_value(values) -> float:
    """Upper median: rank ``n // 2 + 1``, so ``< v`` sends ``floor(n/2)`` left."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("median of an empty sequence")
    return order_statistic(vals, vals.shape[0] // 2 + 1)


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def distances_to(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Euclidean distances from every row of ``points`` to ``q``."""
    if points.shape[1] != q.shape[0]:
        raise DimensionError(
            f"points have dimension {points.shape[1]}, query has {q.shape[0]}")
    diff = points - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))
