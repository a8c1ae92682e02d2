"""Three-point projection geometry and the potential functions Phi_m, Phi_{k,m}.

Small Phi means the nearest neighbor of a query is well separated from the
rest of the data; the tree failure bounds in :mod:`partition_trees.bounds`
are sums of Phi over the levels of a root-to-leaf path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import as_points, as_vector, distances_to


class DegenerateConfigurationError(ValueError):
    pass


class OrderingError(ValueError):
    pass


def collinearity(q, x, y) -> float:
    """|(q-x).(y-x)| / (||q-x|| ||y-x||): 1 for collinear points, 0 for a right angle at x."""
    q, x, y = (np.asarray(v, dtype=np.float64) for v in (q, x, y))
    a = q - x
    b = y - x
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateConfigurationError("collinearity needs x != q and y != x")
    return float(min(1.0, abs(a @ b) / (na * nb)))


def three_point_probability(q, x, y) -> float:
    """Exact probability that y.U falls strictly between q.U and x.U.

    U is uniform on the unit sphere and ``||q - x|| <= ||q - y||``.
    """
    q, x, y = (np.asarray(v, dtype=np.float64) for v in (q, x, y))
    dqx = np.linalg.norm(q - x)
    dqy = np.linalg.norm(q - y)
    if dqx > dqy:
        raise OrderingError(f"need ||q-x|| <= ||q-y||, got {dqx} > {dqy}")
    c = collinearity(q, x, y)
    arg = (dqx / dqy) * math.sqrt(max(0.0, 1.0 - c * c))
    return math.asin(min(1.0, max(-1.0, arg))) / math.pi


def three_point_bounds(q, x, y) -> tuple[float, float]:
    """(lower, upper) sandwich on :func:`three_point_probability`."""
    q, x, y = (np.asarray(v, dtype=np.float64) for v in (q, x, y))
    ratio = np.linalg.norm(q - x) / np.linalg.norm(q - y)
    c = collinearity(q, x, y)
    return (ratio * math.sqrt(max(0.0, 1.0 - c * c)) / math.pi, 0.5 * ratio)


@dataclass(frozen=True)
class NeighborOrdering:
    """Data indices sorted by distance from a query; ties broken by index."""

    query: np.ndarray
    indices: np.ndarray
    distances: np.ndarray

    @classmethod
    def from_points(cls, points, q) -> NeighborOrdering:
        pts = as_points(points)
        qv = as_vector(q, pts.shape[1])
        dist = distances_to(pts, qv)
        order = np.argsort(dist, kind="stable")
        return cls(qv, order, dist[order])

    @classmethod
    def from_distances(cls, distances: Sequence[float]) -> NeighborOrdering:
        """Ordering from raw distances, for configurations given only by radii."""
        dist = np.asarray(distances, dtype=np.float64)
        if np.any(dist < 0) or not np.all(np.isfinite(dist)):
            raise ValueError("distances must be finite and nonnegative")
        order = np.argsort(dist, kind="stable")
        return cls(np.zeros(0), order, dist[order])

    @property
    def n(self) -> int:
        return int(self.distances.shape[0])


def _ratio_terms(ordering: NeighborOrdering, k: int) -> np.ndarray:
    """Ratios mean(d_(1..k)) / d_(i) for i = k+1..n (zero distances give ratio 1)."""
    d = ordering.distances
    num = d[:k].mean()
    tail = d[k:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(tail > 0.0, num / np.where(tail > 0.0, tail, 1.0), 1.0)
    return ratios


def _check_m(ordering: NeighborOrdering, k: int, m: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not (k < m <= ordering.n and m >= 2):
        raise ValueError(f"need max(2, k+1) <= m <= n={ordering.n}, got m={m}, k={k}")


def phi_k(ordering: NeighborOrdering, k: int, m: int) -> float:
    _check_m(ordering, k, m)
    return float(_ratio_terms(ordering, k)[: m - k].sum() / m)


def phi(ordering: NeighborOrdering, m: int | None = None) -> float:
    """Phi_m; ``m=None`` gives Phi over all n points."""
    if m is None:
        m = ordering.n
    return phi_k(ordering, 1, m)


@dataclass(frozen=True)
class PotentialProfile:
    """Phi_{k,m} tabulated over an increasing grid of m."""

    m_grid: np.ndarray
    phi_values: np.ndarray
    k: int = 1

    def at(self, m: int) -> float:
        """Phi at ``m``; off-grid values are linearly interpolated."""
        m_grid = self.m_grid
        lo = max(int(m_grid[0]), self.k + 1)
        m = min(max(int(m), lo), int(m_grid[-1]))
        i = int(np.searchsorted(m_grid, m))
        if i < m_grid.shape[0] and m_grid[i] == m:
            return float(self.phi_values[i])
        return float(np.interp(m, m_grid, self.phi_values))


def potential_profile(ordering: NeighborOrdering, k: int = 1,
                      m_grid: Sequence[int] | None = None) -> PotentialProfile:
    """Phi_{k,m} for every m in ``m_grid`` (default: all m from k+1 to n), in O(n)."""
    n = ordering.n
    if k < 1 or k >= n:
        raise ValueError(f"need 1 <= k < n={n}, got k={k}")
    cums = np.concatenate(([0.0], np.cumsum(_ratio_terms(ordering, k))))
    if m_grid is None:
        grid = np.arange(max(2, k + 1), n + 1)
    else:
        grid = np.unique(np.asarray(m_grid, dtype=np.int64))
        if grid.size == 0 or grid[0] < max(2, k + 1) or grid[-1] > n:
            raise ValueError(f"m grid must lie in [{max(2, k + 1)}, {n}]")
    return PotentialProfile(grid, cums[grid - k] / grid, k)


def separated_fraction_expectation_bound(ordering: NeighborOrdering, m: int) -> float:
    """Upper bound Phi_m / 2 on the expected fraction projected between q and x_(1)."""
    return 0.5 * phi(ordering, m)


def separation_probability_bound(ordering: NeighborOrdering, m: int, alpha: float,
                                 k: int = 1) -> float:
    """Bound on Pr(some x_(j), j <= k, has >= alpha*m points projected between it and q).

    For k=1 this is the Markov bound Phi_m / (2 alpha); for k>1 it is
    k Phi_{k,m} / (2 (alpha - (k-1)/m)). Clamped to [0, 1].
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not k < alpha * m + 1:
        raise ValueError(f"need k < alpha*m + 1, got k={k}, alpha*m={alpha * m}")
    if k == 1:
        raw = phi(ordering, m) / (2.0 * alpha)
    else:
        raw = k * phi_k(ordering, k, m) / (2.0 * (alpha - (k - 1) / m))
    return min(1.0, max(0.0, raw))
