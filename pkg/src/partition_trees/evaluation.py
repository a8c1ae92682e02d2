"""Monte Carlo checks of the closed forms against simulation.

These routines never call the formulas they are meant to check: betweenness
frequencies come from projecting onto sampled directions, failure rates from
building trees and comparing with brute force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import doubling_phi_bound
from .generators import (AdversarialParams, DoublingParams, coordinate_between_fraction,
                         sample_adversarial, sample_doubling, sample_doubling_queries)
from .linalg import derive_seed, random_unit_directions
from .potential import NeighborOrdering, phi, potential_profile
from .trees import TreeKind, build_rp_tree

CHUNK = 200_000


def betweenness_frequency(q, x, y, n_dirs: int, rng: np.random.Generator) -> float:
    """Fraction of random unit directions U with y.U strictly between q.U and x.U."""
    q, x, y = (np.asarray(v, dtype=np.float64) for v in (q, x, y))
    d = q.shape[0]
    hits = 0
    left = n_dirs
    while left > 0:
        c = min(CHUNK, left)
        u = random_unit_directions(c, d, rng)
        pq, px, py = u @ q, u @ x, u @ y
        lo = np.minimum(pq, px)
        hi = np.maximum(pq, px)
        hits += int(np.count_nonzero((py > lo) & (py < hi)))
        left -= c
    return hits / n_dirs


def separated_fraction(points, q, m: int, n_dirs: int, rng: np.random.Generator,
                       k: int = 1) -> np.ndarray:
    """Per direction, the fraction of the m points nearest q that project strictly
    between q and the j-th nearest neighbor, maximized over j <= k."""
    ordering = NeighborOrdering.from_points(points, q)
    pts = np.asarray(points, dtype=np.float64)[ordering.indices[:m]]
    u = random_unit_directions(n_dirs, pts.shape[1], rng)
    proj = pts @ u.T  # (m, n_dirs)
    pq = np.asarray(q, dtype=np.float64) @ u.T
    best = np.zeros(n_dirs)
    for j in range(k):
        lo = np.minimum(pq, proj[j])
        hi = np.maximum(pq, proj[j])
        between = (proj > lo) & (proj < hi)
        best = np.maximum(best, between.sum(axis=0) / m)
    return best


@dataclass
class DoublingPhiTrial:
    holds: bool
    worst_margin: float  # min over the grid of bound - phi


def doubling_phi_trial(intrinsic_dim: int, n: int, delta: float, m_grid, seed: int,
                       k: int = 1) -> DoublingPhiTrial:
    """One dataset draw: does the doubling-measure Phi bound hold on the whole grid?"""
    params = DoublingParams(intrinsic_dim, intrinsic_dim, n, seed)
    data = sample_doubling(params)
    q = sample_doubling_queries(params, 1)[0]
    prof = potential_profile(NeighborOrdering.from_points(data.points, q), k, m_grid)
    margins = [doubling_phi_bound(int(m), intrinsic_dim, delta, k) - p
               for m, p in zip(prof.m_grid, prof.phi_values)]
    return DoublingPhiTrial(min(margins) >= 0.0, float(min(margins)))


def log_grid(lo: int, hi: int, count: int) -> np.ndarray:
    """``count`` integers spaced geometrically on [lo, hi] (duplicates removed)."""
    return np.unique(np.round(np.geomspace(lo, hi, count)).astype(np.int64))


@dataclass
class AdversarialSummary:
    coordinate_between: float
    phi: float
    rp_failure_rate: float


def adversarial_summary(n: int, d: int, M: float, trees: int, leaf_size: int,
                        seed: int) -> AdversarialSummary:
    """Coordinate splits vs. random projections on the spiked instance."""
    inst = sample_adversarial(AdversarialParams(n, d, M, derive_seed(seed, (0,))))
    pts = inst.data.points
    q = inst.query
    frac = float(coordinate_between_fraction(pts, q, pts[0]).mean())
    ph = phi(NeighborOrdering.from_points(pts, q))
    fails = 0
    for t in range(trees):
        tree = build_rp_tree(inst.data, leaf_size, derive_seed(seed, (1, t)))
        if tree.query(q, 1).indices[0] != 0:
            fails += 1
    return AdversarialSummary(frac, ph, fails / trees)


def fit_loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def calibrate_c_o(empirical_rates, leaf_sizes, k: int, d_o: float, alpha: float,
                  delta: float, kind="spill") -> float:
    """Smallest constant c_o for which the doubling failure bound covers every
    observed rate (one rate per leaf size)."""
    rp = TreeKind(kind) is TreeKind.RP
    need = 0.0
    for rate, n_o in zip(empirical_rates, leaf_sizes):
        scale = (8.0 * max(k, math.log(1.0 / delta)) / n_o) ** (1.0 / d_o)
        unit = k * (d_o + math.log(n_o)) * scale if rp else d_o * k / alpha * scale
        need = max(need, rate / unit)
    return need
