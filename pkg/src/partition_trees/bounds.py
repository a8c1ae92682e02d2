"""Exact oracles and closed-form bound calculators.

* :func:`brute_force_knn` is the ground truth every tree query is checked against.
* :func:`poisson_binomial_pmf` computes the exact law of a sum of independent,
  non-identical Bernoullis by dynamic programming (the Poisson approximation
  is far too loose in the topic-model regime).
* The ``*_failure_bound`` functions turn a potential profile into an upper
  bound on the probability that a randomized tree misses the true neighbors.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import as_dataset
from .generators import TopicModelParams
from .linalg import as_vector
from .potential import PotentialProfile
from .trees import QueryResult, TreeKind, nearest_among


class PreconditionError(ValueError):
    """Raised when a bound is requested outside the range where it holds."""


def brute_force_knn(data, q, k: int = 1) -> QueryResult:
    """Exact k nearest neighbors by a linear scan, ties broken by index."""
    ds = as_dataset(data)
    if not 1 <= k <= ds.n:
        raise ValueError(f"need 1 <= k <= n={ds.n}, got k={k}")
    qv = as_vector(q, ds.d)
    idx, dist = nearest_among(ds.points, np.arange(ds.n, dtype=np.int64), qv, k)
    return QueryResult(idx, dist, leaves_visited=0, points_scanned=ds.n)


# ---------------------------------------------------------------------------
# Poisson-binomial machinery


@dataclass
class PoissonBinomial:
    probs: np.ndarray
    pmf: np.ndarray
    # mass beyond the last tabulated count when the DP was truncated
    tail_mass: float = 0.0

    @property
    def odds(self) -> np.ndarray:
        """r_i = a_i / (1 - a_i)."""
        return self.probs / (1.0 - self.probs)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)


def poisson_binomial_pmf(probs: Sequence[float], max_count: Optional[int] = None) -> PoissonBinomial:
    """Exact pmf of B(a_1) + ... + B(a_N), convolving one Bernoulli at a time.

    With ``max_count`` the table is cut at that count (cost O(N * max_count))
    and the discarded mass is reported in ``tail_mass``.
    """
    a = np.asarray(probs, dtype=np.float64).ravel()
    if not np.all((a > 0.0) & (a < 1.0)):
        raise ValueError("Bernoulli probabilities must lie strictly inside (0, 1)")
    size = a.shape[0] + 1 if max_count is None else min(a.shape[0], max_count) + 1
    pmf = np.zeros(size)
    pmf[0] = 1.0
    top = 0
    for p in a:
        hi = min(top + 1, size - 1)
        shifted = pmf[: hi] * p
        pmf[: hi + 1] *= 1.0 - p
        pmf[1: hi + 1] += shifted
        top = hi
    tail = max(0.0, 1.0 - float(pmf.sum())) if size < a.shape[0] + 1 else 0.0
    return PoissonBinomial(a, pmf, tail)


def bernoulli_ratio_lower_bound(probs: Sequence[float]) -> np.ndarray:
    """(1/(l+1)) * sum_{i>l} r_(i) for l = 0..N-1, with the odds r sorted descending.

    Lower bound on pmf[l+1] / pmf[l] for the Poisson-binomial law of ``probs``.
    """
    a = np.asarray(probs, dtype=np.float64)
    r = np.sort(a / (1.0 - a))[::-1]
    # suffix sums: tail[l] = sum_{i >= l} r[i] (0-indexed), i.e. sum_{i>l} in 1-indexed terms
    tail = np.cumsum(r[::-1])[::-1]
    ell = np.arange(a.shape[0])
    return tail / (ell + 1)


def hamming_bernoulli_probs(q, word_probs) -> np.ndarray:
    """a_i = p_i where q_i = 0 and 1 - p_i where q_i = 1."""
    q = np.asarray(q)
    p = np.asarray(word_probs, dtype=np.float64)
    if q.shape[-1] != p.shape[-1]:
        raise ValueError(f"query has length {q.shape[-1]}, vocabulary has {p.shape[-1]}")
    if not np.all((q == 0) | (q == 1)):
        raise ValueError("query must be a binary vector")
    return np.where(q == 1, 1.0 - p, p)


def hamming_distance_distribution(q, params: TopicModelParams) -> np.ndarray:
    """Exact pmf of d_H(q, X) for X drawn from the topic mixture."""
    out = np.zeros(params.vocab_size + 1)
    for w, row in zip(params.weights, params.word_probs):
        if w == 0.0:
            continue
        out += w * poisson_binomial_pmf(hamming_bernoulli_probs(q, row)).pmf
    return out


def growth_ratio_lower_bound(L: float, ell) -> np.ndarray:
    """(L - l/2) / (l + 1): lower bound on Pr(d_H = l+1) / Pr(d_H = l) when all p < 1/2."""
    ell = np.asarray(ell, dtype=np.float64)
    return (L - ell / 2.0) / (ell + 1.0)


def compute_v(q, params: TopicModelParams, n: int, k: int = 1, delta: float = 0.05) -> int:
    """Smallest v with Pr(d_H(q, X) <= v) >= (8/n) max(k, ln 1/delta)."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    threshold = 8.0 / n * max(k, math.log(1.0 / delta))
    if threshold > 1.0:
        raise PreconditionError(f"threshold {threshold:.3g} exceeds 1; n={n} is too small")
    cdf = np.cumsum(hamming_distance_distribution(q, params))
    hits = np.nonzero(cdf >= threshold)[0]
    # rounding can leave cdf[-1] a hair below 1
    return int(hits[0]) if hits.size else params.vocab_size


# ---------------------------------------------------------------------------
# Failure bounds


@dataclass
class BoundReport:
    kind: str
    levels: list[int]
    level_phi: list[float]
    raw_bound: float
    bound: float
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> BoundReport:
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [f"# {self.kind} failure bound  " + "  ".join(
            f"{k}={v}" for k, v in self.params.items())]
        lines.append(f"{'level':>5} {'m':>10} {'phi':>14}")
        for i, (m, ph) in enumerate(zip(self.levels, self.level_phi)):
            lines.append(f"{i:>5} {m:>10} {ph:>14.6g}")
        lines.append(f"raw bound    {self.raw_bound:.6g}")
        lines.append(f"bound        {self.bound:.6g}")
        return "\n".join(lines) + "\n"


def num_levels(n: int, leaf_size: int, beta: float) -> int:
    """ell = ceil(log_{1/beta}(n / n_o)), or 0 when n <= n_o."""
    if n <= leaf_size:
        return 0
    return math.ceil(math.log(n / leaf_size) / math.log(1.0 / beta) - 1e-12)


def level_sizes(n: int, leaf_size: int, beta: float, k: int = 1) -> list[int]:
    """floor(beta^i n) for i = 0..ell, each raised to at least max(2, k+1)."""
    ell = num_levels(n, leaf_size, beta)
    lo = max(2, k + 1)
    return [max(lo, int(math.floor(beta ** i * n + 1e-9))) for i in range(ell + 1)]


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def spill_failure_bound(profile: PotentialProfile, alpha: float, leaf_size: int, n: int,
                        kind="spill", k: int = 1) -> BoundReport:
    """(1/2alpha) sum_i Phi_{beta^i n} for k=1, (k/alpha) sum_i Phi_{k,beta^i n} for k>1.

    beta is 1/2 + alpha for spill trees and 1/2 for virtual spill trees.
    """
    kind = TreeKind(kind)
    if kind is TreeKind.RP:
        raise ValueError("use rp_failure_bound for rp trees")
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    if profile.k != k:
        raise ValueError(f"profile is for k={profile.k}, bound requested for k={k}")
    if k > 1 and not k <= alpha * leaf_size / 2:
        raise PreconditionError(f"need k <= alpha*n_o/2 = {alpha * leaf_size / 2}, got k={k}")
    beta = 0.5 + alpha if kind is TreeKind.SPILL else 0.5
    levels = level_sizes(n, leaf_size, beta, k)
    phis = [profile.at(m) for m in levels]
    scale = 1.0 / (2.0 * alpha) if k == 1 else k / alpha
    raw = scale * math.fsum(phis)
    params = {"alpha": alpha, "beta": beta, "n_o": leaf_size, "k": k, "ell": len(levels) - 1}
    return BoundReport(kind.value, levels, phis, raw, _clamp01(raw), params)


def xlog_term(x: float) -> float:
    """x ln(2e/x), continuously extended by 0 at x = 0."""
    if x <= 0.0:
        return 0.0
    return x * math.log(2.0 * math.e / x)


def rp_failure_bound(profile: PotentialProfile, leaf_size: int, n: int, k: int = 1) -> BoundReport:
    """sum_i Phi ln(2e/Phi) over levels beta^i n with beta = 3/4; for k>1,
    2k sum_i Phi_k ln(2e/(k Phi_k)) + 16(k-1)/n_o."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if profile.k != k:
        raise ValueError(f"profile is for k={profile.k}, bound requested for k={k}")
    beta = 0.75
    levels = level_sizes(n, leaf_size, beta, k)
    phis = [profile.at(m) for m in levels]
    if any(p < 0 or p > 1 for p in phis):
        raise ValueError("potential values must lie in [0, 1]")
    if k == 1:
        raw = math.fsum(xlog_term(p) for p in phis)
    else:
        raw = 2.0 * math.fsum(xlog_term(k * p) for p in phis) + 16.0 * (k - 1) / leaf_size
    params = {"beta": beta, "n_o": leaf_size, "k": k, "ell": len(levels) - 1}
    return BoundReport("rp", levels, phis, raw, _clamp01(raw), params)


def doubling_phi_bound(m: int, d_o: float, delta: float, k: int = 1) -> float:
    """6 (2 ln(1/delta) / m)^(1/d_o) for k=1; 6 (8 max(k, ln 1/delta) / m)^(1/d_o) for k>1."""
    if d_o < 2:
        raise PreconditionError(f"need intrinsic dimension >= 2, got {d_o}")
    if not 0.0 < delta < 0.5:
        raise PreconditionError(f"need 0 < delta < 1/2, got {delta}")
    if m < 2 or k < 1:
        raise PreconditionError(f"need m >= 2 and k >= 1, got m={m}, k={k}")
    log_term = math.log(1.0 / delta)
    if k == 1:
        return 6.0 * (2.0 * log_term / m) ** (1.0 / d_o)
    return 6.0 * (8.0 * max(k, log_term) / m) ** (1.0 / d_o)


def topic_phi_bound(v: int, L: float, n: int, m: int, c_o: float) -> float:
    """4 sqrt(v / (c_o L - log2(n/m)))."""
    denom = c_o * L - math.log2(n / m)
    if denom <= 0:
        raise PreconditionError(
            f"bound is vacuous: c_o*L - log2(n/m) = {denom:.4g} <= 0")
    if v < 0:
        raise ValueError(f"v must be >= 0, got {v}")
    return 4.0 * math.sqrt(v / denom)


def summation_lemma_bound(A: float, B: float, d_o: float, beta: float, leaf_size: float,
                          with_log: bool = False) -> float:
    """Closed-form bound on sum_i F(beta^i n) when F(m) <= A (B/m)^(1/d_o) for m >= n_o.

    ``with_log`` bounds sum_i F ln(2e/F) instead; it needs n_o >= B (A/2)^d_o.
    """
    if A <= 0 or B <= 0:
        raise ValueError("A and B must be positive")
    if d_o < 1:
        raise ValueError(f"d_o must be >= 1, got {d_o}")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    base = A * d_o / (1.0 - beta) * (B / leaf_size) ** (1.0 / d_o)
    if not with_log:
        return base
    if leaf_size < B * (A / 2.0) ** d_o:
        raise PreconditionError(f"need n_o >= B (A/2)^d_o = {B * (A / 2.0) ** d_o:.4g}")
    return base * (math.log(1.0 / beta) / (1.0 - beta) + math.log(2.0 * math.e / A)
                   + math.log(leaf_size / B) / d_o)


def doubling_failure_bound(k: int, d_o: float, alpha: float, leaf_size: int, delta: float,
                           c_o: float, kind="spill", clamp: bool = True) -> float:
    """Failure bound for data from a doubling measure of dimension d_o.

    spill (either variant): (c_o d_o k / alpha) (8 max(k, ln 1/delta) / n_o)^(1/d_o)
    rp:                     c_o k (d_o + ln n_o) (8 max(k, ln 1/delta) / n_o)^(1/d_o),
                            valid for n_o >= c_o (3k)^d_o max(k, ln 1/delta).
    """
    kind = TreeKind(kind)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    mk = max(k, math.log(1.0 / delta))
    scale = (8.0 * mk / leaf_size) ** (1.0 / d_o)
    if kind is TreeKind.RP:
        need = c_o * (3 * k) ** d_o * mk
        if leaf_size < need:
            raise PreconditionError(f"rp bound needs n_o >= {need:.4g}, got {leaf_size}")
        raw = c_o * k * (d_o + math.log(leaf_size)) * scale
    else:
        if k > 1 and k > alpha * leaf_size / 2:
            raise PreconditionError(f"need k <= alpha*n_o/2, got k={k}")
        raw = c_o * d_o * k / alpha * scale
    return _clamp01(raw) if clamp else raw
