"""Synthetic data: a doubling measure, a Bernoulli topic model, and a
coordinate-split adversarial instance.

All samplers are pure functions of their parameters (including the seed).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dataset import Dataset
from .linalg import random_unit_directions, rng_for

# stream ids under a generator seed
_DATA_STREAM = 0
_QUERY_STREAM = 1


@dataclass(frozen=True)
class DoublingParams:
    """Uniform measure on the unit ball of R^{intrinsic_dim}, embedded in R^{ambient_dim}."""

    intrinsic_dim: int
    ambient_dim: int
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.intrinsic_dim < 1:
            raise ValueError(f"intrinsic dimension must be >= 1, got {self.intrinsic_dim}")
        if self.ambient_dim < self.intrinsic_dim:
            raise ValueError("ambient dimension must be >= intrinsic dimension")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")


def uniform_ball(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniform points in the unit ball of R^dim (direction * U^(1/dim))."""
    dirs = random_unit_directions(count, dim, rng)
    radii = rng.random(count) ** (1.0 / dim)
    return dirs * radii[:, None]


def _embed(points: np.ndarray, ambient_dim: int) -> np.ndarray:
    out = np.zeros((points.shape[0], ambient_dim))
    out[:, : points.shape[1]] = points
    return out


def sample_doubling(params: DoublingParams) -> Dataset:
    pts = uniform_ball(params.n, params.intrinsic_dim, rng_for(params.seed, (_DATA_STREAM,)))
    return Dataset(_embed(pts, params.ambient_dim), "doubling", asdict(params))


def sample_doubling_queries(params: DoublingParams, count: int) -> np.ndarray:
    """Queries from the same ball as the data, on an independent stream."""
    pts = uniform_ball(count, params.intrinsic_dim, rng_for(params.seed, (_QUERY_STREAM,)))
    return _embed(pts, params.ambient_dim)


@dataclass
class TopicModelParams:
    """Mixture of Bernoulli product distributions over {0,1}^N.

    ``word_probs[j, i]`` is the probability that word i appears in a document
    about topic j; all entries must lie strictly inside (0, 1/2).
    """

    weights: np.ndarray
    word_probs: np.ndarray
    n: int = 1
    seed: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        self.word_probs = np.atleast_2d(np.asarray(self.word_probs, dtype=np.float64))
        if self.word_probs.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"{self.weights.shape[0]} weights for {self.word_probs.shape[0]} topics")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("topic weights must be nonnegative and sum to 1")
        p = self.word_probs
        if not np.all((p > 0.0) & (p < 0.5)):
            raise ValueError("word probabilities must lie strictly inside (0, 1/2)")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")

    @property
    def vocab_size(self) -> int:
        return int(self.word_probs.shape[1])

    @property
    def topics(self) -> int:
        return int(self.word_probs.shape[0])

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "word_probs": self.word_probs.tolist(),
                "n": self.n, "seed": self.seed}


def random_topic_model(topics: int, vocab_size: int, doc_length: float, n: int = 1,
                       seed: int = 0, weights=None) -> TopicModelParams:
    """Random word probabilities rescaled so every topic has expected length ``doc_length``.

    Raw probabilities are Dirichlet-like draws; after rescaling, entries that
    would reach 1/2 are capped and the excess spread over the other words.
    """
    if not 0 < doc_length < vocab_size / 2:
        raise ValueError(f"doc_length must lie in (0, N/2), got {doc_length}")
    rng = rng_for(seed, (2,))
    cap = 0.5 - 1e-6
    rows = []
    for _ in range(topics):
        raw = rng.gamma(1.0, size=vocab_size)
        p = raw / raw.sum() * doc_length
        for _ in range(100):
            over = p > cap
            if not over.any():
                break
            excess = (p[over] - cap).sum()
            p[over] = cap
            free = ~over & (p < cap)
            p[free] += excess * p[free] / p[free].sum()
        p = np.clip(p, 1e-9, cap)
        rows.append(p)
    if weights is None:
        weights = rng.dirichlet(np.ones(topics))
        weights = weights / weights.sum()
    return TopicModelParams(np.asarray(weights), np.vstack(rows), n, seed)


@dataclass(frozen=True)
class ExpectedLengths:
    per_topic: np.ndarray
    min: float


def expected_lengths(params: TopicModelParams) -> ExpectedLengths:
    """L_j = sum_i p_i^(j) for each topic, and L = min_j L_j."""
    per_topic = params.word_probs.sum(axis=1)
    return ExpectedLengths(per_topic, float(per_topic.min()))


def _sample_documents(params: TopicModelParams, count: int, rng: np.random.Generator):
    labels = rng.choice(params.topics, size=count, p=params.weights)
    u = rng.random((count, params.vocab_size))
    docs = (u < params.word_probs[labels]).astype(np.float64)
    return docs, labels


def sample_topic_model(params: TopicModelParams) -> Dataset:
    docs, labels = _sample_documents(params, params.n, rng_for(params.seed, (_DATA_STREAM,)))
    prov = params.to_dict()
    prov["topic_labels"] = labels.tolist()
    return Dataset(docs, "topic", prov)


def sample_topic_queries(params: TopicModelParams, count: int) -> np.ndarray:
    docs, _ = _sample_documents(params, count, rng_for(params.seed, (_QUERY_STREAM,)))
    return docs


@dataclass(frozen=True)
class AdversarialParams:
    """x_1 = all-ones; every other point has one coordinate M and the rest uniform in (0,1)."""

    n: int
    d: int
    M: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if not self.M > 1:
            raise ValueError(f"M must exceed 1, got {self.M}")
        if not self.M ** 2 > self.d:
            raise ValueError(
                f"need M^2 > d so that the all-ones point is nearest to the origin; "
                f"got M={self.M}, d={self.d}")


@dataclass
class AdversarialInstance:
    data: Dataset
    query: np.ndarray
    spike_coords: Optional[np.ndarray] = field(default=None)


def sample_adversarial(params: AdversarialParams) -> AdversarialInstance:
    rng = rng_for(params.seed, (_DATA_STREAM,))
    n, d = params.n, params.d
    pts = rng.random((n, d))
    # rng.random is [0, 1); keep coordinates strictly inside (0, 1)
    pts[pts == 0.0] = 0.5
    spikes = rng.integers(0, d, size=n)
    pts[np.arange(n), spikes] = params.M
    pts[0] = 1.0
    spikes[0] = -1
    return AdversarialInstance(Dataset(pts, "adversarial", asdict(params)), np.zeros(d), spikes)


def coordinate_between_fraction(data: np.ndarray, q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """For each coordinate j, the fraction of rows whose j-th value lies strictly
    between q_j and x_j."""
    lo = np.minimum(q, x)
    hi = np.maximum(q, x)
    between = (data > lo) & (data < hi)
    return between.mean(axis=0)
