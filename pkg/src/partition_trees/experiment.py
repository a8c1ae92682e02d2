"""End-to-end failure-rate experiments: empirical vs. theoretical.

An experiment fixes one dataset and a set of queries, builds ``trials``
independent trees of one kind, and records for every query how often
defeatist search misses the exact k nearest neighbors. Each query's
empirical rate is paired with the failure bound computed from that query's
own potential profile.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .bounds import PreconditionError, brute_force_knn, rp_failure_bound, spill_failure_bound
from .dataset import Dataset
from .generators import (AdversarialParams, DoublingParams, random_topic_model,
                         sample_adversarial, sample_doubling, sample_doubling_queries,
                         sample_topic_model, sample_topic_queries)
from .io import load_dataset, load_points, read_json, write_json
from .linalg import derive_seed, rng_for
from .potential import NeighborOrdering, potential_profile
from .trees import TreeKind, build_tree, tree_stats

log = logging.getLogger(__name__)

GENERATORS = ("doubling", "topic", "adversarial", "external-file")

_DATA_STREAM = 0
_TREE_STREAM = 1
_HOLDOUT_STREAM = 2


@dataclass
class ExperimentConfig:
    generator: str = "doubling"
    tree_kind: str = "spill"
    n: int = 10_000
    d: int = 10
    leaf_size: int = 100
    alpha: float = 0.1
    k: int = 1
    trials: int = 100
    queries: int = 50
    delta: float = 0.05
    c_o: float = 0.125
    seed: int = 0
    # doubling
    intrinsic_dim: int = 2
    # topic model
    topics: int = 5
    doc_length: float = 64.0
    # adversarial
    M: float = 1e6
    # external-file
    data_path: Optional[str] = None
    query_path: Optional[str] = None

    def validate(self) -> None:
        """Check every parameter up front; raises ValueError on the first problem."""
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        TreeKind(self.tree_kind)
        for name in ("n", "d", "leaf_size", "k", "trials", "queries"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.tree_kind != "rp" and not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.c_o <= 0:
            raise ValueError(f"c_o must be positive, got {self.c_o}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.generator == "doubling":
            DoublingParams(self.intrinsic_dim, self.d, self.n, 0)
        elif self.generator == "topic":
            if not 0 < self.doc_length < self.d / 2:
                raise ValueError(
                    f"doc_length must lie in (0, d/2) for vocabulary size d={self.d}")
            if self.topics < 1:
                raise ValueError("topics must be >= 1")
        elif self.generator == "adversarial":
            AdversarialParams(self.n, self.d, self.M, 0)
            if self.queries != 1:
                raise ValueError("the adversarial instance has a single query (the origin)")
        elif self.generator == "external-file":
            if not self.data_path:
                raise ValueError("external-file generator needs data_path")
            if not Path(self.data_path).exists():
                raise FileNotFoundError(self.data_path)
            if self.query_path and not Path(self.query_path).exists():
                raise FileNotFoundError(self.query_path)
        # for external files n comes from the file and is checked after loading
        if self.generator != "external-file" and self.k >= self.n:
            raise ValueError(f"k={self.k} must be below n={self.n}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class FailureReport:
    failure_rate: float
    std_error: float
    bound: Optional[float]
    level_phi: list[float]
    mean_points_scanned: float
    mean_leaves_visited: float
    mean_stored_indices: float
    per_query_failure: list[float]
    per_query_bound: list[Optional[float]]
    config: dict = field(default_factory=dict)
    bound_note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> FailureReport:
        return cls(**d)

    def to_text(self) -> str:
        cfg = self.config
        head = ", ".join(f"{k}={v}" for k, v in cfg.items() if v is not None)
        bound = "n/a" if self.bound is None else f"{self.bound:.6g}"
        lines = [
            f"# experiment: {head}",
            f"empirical failure rate   {self.failure_rate:.6g} +/- {self.std_error:.3g}",
            f"theoretical bound (mean) {bound}",
            f"mean points scanned      {self.mean_points_scanned:.6g}",
            f"mean leaves visited      {self.mean_leaves_visited:.6g}",
            f"mean stored indices      {self.mean_stored_indices:.6g}",
        ]
        if self.bound_note:
            lines.append(f"note: {self.bound_note}")
        lines.append("")
        lines.append(f"{'level':>5} {'mean phi':>14}")
        lines += [f"{i:>5} {p:>14.6g}" for i, p in enumerate(self.level_phi)]
        lines.append("")
        lines.append(f"{'query':>5} {'failure':>10} {'bound':>10}")
        for i, (f, b) in enumerate(zip(self.per_query_failure, self.per_query_bound)):
            lines.append(f"{i:>5} {f:>10.4f} {'n/a' if b is None else f'{b:.4f}':>10}")
        return "\n".join(lines) + "\n"


def make_data(config: ExperimentConfig) -> tuple[Dataset, np.ndarray]:
    """The dataset and query matrix an experiment runs on."""
    gseed = derive_seed(config.seed, (_DATA_STREAM,))
    if config.generator == "doubling":
        params = DoublingParams(config.intrinsic_dim, config.d, config.n, gseed)
        return sample_doubling(params), sample_doubling_queries(params, config.queries)
    if config.generator == "topic":
        params = random_topic_model(config.topics, config.d, config.doc_length,
                                    n=config.n, seed=gseed)
        return sample_topic_model(params), sample_topic_queries(params, config.queries)
    if config.generator == "adversarial":
        inst = sample_adversarial(AdversarialParams(config.n, config.d, config.M, gseed))
        return inst.data, inst.query[None, :]
    data = load_dataset(config.data_path)
    if config.query_path:
        return data, load_points(config.query_path)
    if data.n <= config.queries:
        raise ValueError(f"cannot hold out {config.queries} queries from {data.n} rows")
    rng = rng_for(config.seed, (_HOLDOUT_STREAM,))
    held = rng.choice(data.n, size=config.queries, replace=False)
    keep = np.setdiff1d(np.arange(data.n), held)
    return (Dataset(data.points[keep], "external", dict(data.provenance, held_out=held.tolist())),
            data.points[held])


def _query_bound(config: ExperimentConfig, ordering: NeighborOrdering, n: int):
    kind = TreeKind(config.tree_kind)
    profile = potential_profile(ordering, config.k)
    if kind is TreeKind.RP:
        return rp_failure_bound(profile, config.leaf_size, n, config.k)
    return spill_failure_bound(profile, config.alpha, config.leaf_size, n, kind, config.k)


def run_experiment(config: ExperimentConfig, data: Dataset | None = None,
                   queries: np.ndarray | None = None) -> FailureReport:
    """Build ``trials`` trees, answer every query with each, compare to brute force.

    ``data``/``queries`` override the configured generator (for callers that
    already hold the inputs).
    """
    config.validate()
    if data is None or queries is None:
        data, queries = make_data(config)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != data.d:
        raise ValueError(f"queries have dimension {queries.shape[1]}, data has {data.d}")
    nq = queries.shape[0]
    k = config.k
    if k >= data.n:
        raise ValueError(f"k={k} must be below the number of indexed points {data.n}")

    exact = [frozenset(brute_force_knn(data, q, k).indices.tolist()) for q in queries]

    bounds: list[Optional[float]] = []
    level_rows = []
    note = ""
    for q in queries:
        try:
            rep = _query_bound(config, NeighborOrdering.from_points(data.points, q), data.n)
        except PreconditionError as exc:
            bounds.append(None)
            note = str(exc)
            continue
        bounds.append(rep.bound)
        level_rows.append(rep.level_phi)

    failures = np.zeros(nq)
    scanned = visited = 0
    stored = 0
    for t in range(config.trials):
        tree = build_tree(config.tree_kind, data, config.leaf_size, config.alpha,
                          derive_seed(config.seed, (_TREE_STREAM, t)))
        stored += tree_stats(tree).stored_indices
        for j, q in enumerate(queries):
            res = tree.query(q, k)
            scanned += res.points_scanned
            visited += res.leaves_visited
            if frozenset(res.indices.tolist()) != exact[j]:
                failures[j] += 1
        log.debug("trial %d/%d done", t + 1, config.trials)

    total = config.trials * nq
    rate = float(failures.sum() / total)
    known = [b for b in bounds if b is not None]
    return FailureReport(
        failure_rate=rate,
        std_error=math.sqrt(rate * (1.0 - rate) / total),
        bound=float(np.mean(known)) if known else None,
        level_phi=np.mean(np.asarray(level_rows), axis=0).tolist() if level_rows else [],
        mean_points_scanned=scanned / total,
        mean_leaves_visited=visited / total,
        mean_stored_indices=stored / config.trials,
        per_query_failure=(failures / config.trials).tolist(),
        per_query_bound=bounds,
        config=config.to_dict(),
        bound_note=note,
    )


def _report_paths(path) -> tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".txt") else path
    return stem.with_suffix(".json"), stem.with_suffix(".txt")


def emit_report(report, path) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (machine-readable) and ``<stem>.txt`` (table).

    Works for any report type with ``to_dict`` and ``to_text``.
    """
    json_path, txt_path = _report_paths(path)
    write_json(report.to_dict(), json_path)
    txt_path.write_text(report.to_text())
    return json_path, txt_path


def read_report(path) -> FailureReport:
    json_path, _ = _report_paths(path)
    return FailureReport.from_dict(read_json(json_path))
