"""RP trees, spill trees and virtual spill trees with defeatist search.

=================  ==================  ==================
tree               routing data        routing queries
=================  ==================  ==================
rp                 perturbed split     perturbed split
spill              overlapping split   median split
virtual-spill      median split        overlapping split
=================  ==================  ==================

Every node draws its randomness from the stream ``(tree seed, path)`` where
``path`` is the 0/1 sequence of turns from the root, so a subtree is the same
no matter when (or on which thread) it is built.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import BinaryIO, Iterator, Optional, Union

import numpy as np

from .dataset import Dataset, as_dataset
from .linalg import (as_vector, distances_to, fractile_value,
                     median_value, random_unit_direction, rng_for)

MAX_REDRAWS = 8


class TreeKind(str, Enum):
    RP = "rp"
    SPILL = "spill"
    VIRTUAL_SPILL = "virtual-spill"


_KIND_CODES = {TreeKind.RP: 0, TreeKind.SPILL: 1, TreeKind.VIRTUAL_SPILL: 2}


@dataclass(frozen=True)
class SplitRule:
    direction: np.ndarray
    median: Optional[float] = None
    low: Optional[float] = None
    high: Optional[float] = None
    perturbed: Optional[float] = None


@dataclass(frozen=True)
class Leaf:
    indices: np.ndarray


@dataclass(frozen=True)
class Internal:
    rule: SplitRule
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Internal]


@dataclass
class PartitionTree:
    kind: TreeKind
    alpha: float
    leaf_size: int
    root: TreeNode
    seed: int
    data: Dataset

    def query(self, q, k: int = 1) -> "QueryResult":
        return query(self, q, k)


@dataclass
class QueryResult:
    indices: np.ndarray
    distances: np.ndarray
    leaves_visited: int
    points_scanned: int
    short: bool = False


def _check_build_args(data, leaf_size: int, alpha: float | None) -> Dataset:
    ds = as_dataset(data)
    if leaf_size < 1:
        raise ValueError(f"leaf size must be >= 1, got {leaf_size}")
    if alpha is not None and not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    return ds


def _split_rp(proj: np.ndarray, rng: np.random.Generator, alpha: float):
    beta = rng.uniform(0.25, 0.75)
    v = fractile_value(proj, beta)
    left = proj < v
    n_left = int(left.sum())
    if n_left == 0 or n_left == proj.shape[0]:
        return None
    return {"perturbed": v}, left, ~left


def _split_spill(proj: np.ndarray, rng: np.random.Generator, alpha: float):
    med = median_value(proj)
    below = proj < med
    if not below.any():
        return None
    low = fractile_value(proj, 0.5 - alpha)
    high = fractile_value(proj, 0.5 + alpha)
    left = proj < high
    right = proj >= low
    m = proj.shape[0]
    if left.sum() == m or right.sum() == m:
        # overlap too wide to shrink this node: fall back to the median split
        left, right = below, ~below
    return {"median": med, "low": low, "high": high}, left, right


def _split_virtual(proj: np.ndarray, rng: np.random.Generator, alpha: float):
    med = median_value(proj)
    below = proj < med
    if not below.any():
        return None
    low = fractile_value(proj, 0.5 - alpha)
    high = fractile_value(proj, 0.5 + alpha)
    return {"median": med, "low": low, "high": high}, below, ~below


_SPLITTERS = {
    TreeKind.RP: _split_rp,
    TreeKind.SPILL: _split_spill,
    TreeKind.VIRTUAL_SPILL: _split_virtual,
}


def _build_node(points: np.ndarray, idx: np.ndarray, path: tuple, kind: TreeKind,
                alpha: float, leaf_size: int, seed: int) -> TreeNode:
    if idx.shape[0] <= leaf_size:
        return Leaf(idx)
    rng = rng_for(seed, path)
    sub = points[idx]
    splitter = _SPLITTERS[kind]
    for _ in range(MAX_REDRAWS + 1):
        u = random_unit_direction(points.shape[1], rng)
        split = splitter(sub @ u, rng, alpha)
        if split is not None:
            break
    else:
        # every direction failed to separate the points (duplicates)
        return Leaf(idx)
    thresholds, left, right = split
    return Internal(
        SplitRule(u, **thresholds),
        _build_node(points, idx[left], path + (0,), kind, alpha, leaf_size, seed),
        _build_node(points, idx[right], path + (1,), kind, alpha, leaf_size, seed),
    )


def _build(kind: TreeKind, data, leaf_size: int, alpha: float, seed: int) -> PartitionTree:
    ds = _check_build_args(data, leaf_size, None if kind is TreeKind.RP else alpha)
    root = _build_node(ds.points, np.arange(ds.n, dtype=np.int64), (), kind,
                       alpha, leaf_size, seed)
    return PartitionTree(kind, alpha, leaf_size, root, int(seed), ds)


def build_rp_tree(data, leaf_size: int, seed: int) -> PartitionTree:
    """Split at a uniformly random fractile in [1/4, 3/4] of a random projection."""
    return _build(TreeKind.RP, data, leaf_size, 0.0, seed)


def build_spill_tree(data, leaf_size: int, alpha: float, seed: int) -> PartitionTree:
    """Store points in every leaf reached through overlapping splits.

    Each child keeps roughly a ``1/2 + alpha`` fraction of its parent, so the
    tree stores about ``n_o (n / n_o) ** log_{1/(1/2+alpha)} 2`` indices.
    """
    return _build(TreeKind.SPILL, data, leaf_size, alpha, seed)


def build_virtual_spill_tree(data, leaf_size: int, alpha: float, seed: int) -> PartitionTree:
    return _build(TreeKind.VIRTUAL_SPILL, data, leaf_size, alpha, seed)


def build_tree(kind, data, leaf_size: int, alpha: float = 0.0, seed: int = 0) -> PartitionTree:
    kind = TreeKind(kind)
    if kind is TreeKind.RP:
        return build_rp_tree(data, leaf_size, seed)
    if kind is TreeKind.SPILL:
        return build_spill_tree(data, leaf_size, alpha, seed)
    return build_virtual_spill_tree(data, leaf_size, alpha, seed)


def route(tree: PartitionTree, q: np.ndarray) -> list[Leaf]:
    """Leaves reached by the query under the tree's query-routing rule."""
    node = tree.root
    if tree.kind is not TreeKind.VIRTUAL_SPILL:
        use_perturbed = tree.kind is TreeKind.RP
        while isinstance(node, Internal):
            r = node.rule
            t = r.perturbed if use_perturbed else r.median
            node = node.left if q @ r.direction < t else node.right
        return [node]
    leaves = []
    stack = [node]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            leaves.append(node)
            continue
        r = node.rule
        p = q @ r.direction
        # push right first so leaves come out left to right
        if p >= r.low:
            stack.append(node.right)
        if p < r.high:
            stack.append(node.left)
    return leaves


def nearest_among(points: np.ndarray, candidates: np.ndarray, q: np.ndarray,
                  k: int) -> tuple[np.ndarray, np.ndarray]:
    """k nearest of ``candidates`` to ``q``, ties broken by index."""
    dist = distances_to(points[candidates], q)
    order = np.lexsort((candidates, dist))[:k]
    return candidates[order], dist[order]


def query(tree: PartitionTree, q, k: int = 1) -> QueryResult:
    """Defeatist k-NN search: scan only the leaves the query is routed to."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    qv = as_vector(q, tree.data.d)
    leaves = route(tree, qv)
    if len(leaves) == 1:
        cand = leaves[0].indices
    else:
        cand = np.concatenate([leaf.indices for leaf in leaves])
    idx, dist = nearest_among(tree.data.points, cand, qv, k)
    return QueryResult(idx, dist, len(leaves), int(cand.shape[0]), idx.shape[0] < k)


def iter_nodes(node: TreeNode, depth: int = 0) -> Iterator[tuple[TreeNode, int]]:
    """Preorder traversal yielding ``(node, depth)``."""
    stack = [(node, depth)]
    while stack:
        node, depth = stack.pop()
        yield node, depth
        if isinstance(node, Internal):
            stack.append((node.right, depth + 1))
            stack.append((node.left, depth + 1))


@dataclass(frozen=True)
class TreeStats:
    depth: int
    leaf_count: int
    stored_indices: int
    max_leaf_size: int


def tree_stats(tree: PartitionTree) -> TreeStats:
    depth = leaves = stored = biggest = 0
    for node, dep in iter_nodes(tree.root):
        if isinstance(node, Leaf):
            size = int(node.indices.shape[0])
            depth = max(depth, dep)
            leaves += 1
            stored += size
            biggest = max(biggest, size)
    return TreeStats(depth, leaves, stored, biggest)


# ---------------------------------------------------------------------------
# Serialization
#
# Header (little-endian, 39 bytes):
#   magic "PTRF" | version u16 | kind u8 | n u64 | d u32 | n_o u32 | alpha f64 | seed u64
# followed by the nodes in preorder. Each node starts with a tag byte:
#   0 = leaf:      count u64, then count u64 indices
#   1 = internal:  flags u8 (bit 0: perturbed present, bit 1: median/low/high
#                  present), d f64 direction coordinates, then perturbed f64
#                  and/or median, low, high f64 as flagged; left subtree;
#                  right subtree.

TREE_MAGIC = b"PTRF"
TREE_VERSION = 1
_HEADER = struct.Struct("<4sHBQIIdQ")


class TreeFormatError(ValueError):
    pass


def write_tree(tree: PartitionTree, fh: BinaryIO) -> None:
    d = tree.data.d
    fh.write(_HEADER.pack(TREE_MAGIC, TREE_VERSION, _KIND_CODES[tree.kind], tree.data.n,
                          d, tree.leaf_size, float(tree.alpha), tree.seed))
    for node, _ in iter_nodes(tree.root):
        if isinstance(node, Leaf):
            fh.write(struct.pack("<BQ", 0, node.indices.shape[0]))
            fh.write(np.ascontiguousarray(node.indices, dtype="<u8").tobytes())
        else:
            r = node.rule
            flags = (r.perturbed is not None) | ((r.median is not None) << 1)
            fh.write(struct.pack("<BB", 1, flags))
            fh.write(np.ascontiguousarray(r.direction, dtype="<f8").tobytes())
            if r.perturbed is not None:
                fh.write(struct.pack("<d", r.perturbed))
            if r.median is not None:
                fh.write(struct.pack("<ddd", r.median, r.low, r.high))


def tree_to_bytes(tree: PartitionTree) -> bytes:
    buf = io.BytesIO()
    write_tree(tree, buf)
    return buf.getvalue()


def _read_exact(fh: BinaryIO, size: int) -> bytes:
    raw = fh.read(size)
    if len(raw) != size:
        raise TreeFormatError(f"truncated tree stream: wanted {size} bytes, got {len(raw)}")
    return raw


def read_tree(fh: BinaryIO, data) -> PartitionTree:
    """Read a tree written by :func:`write_tree`; ``data`` must be the indexed dataset."""
    ds = as_dataset(data)
    magic, version, code, n, d, leaf_size, alpha, seed = _HEADER.unpack(
        _read_exact(fh, _HEADER.size))
    if magic != TREE_MAGIC:
        raise TreeFormatError(f"bad magic {magic!r}")
    if version != TREE_VERSION:
        raise TreeFormatError(f"unsupported tree format version {version}")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise TreeFormatError(f"unknown tree kind code {code}")
    if (n, d) != (ds.n, ds.d):
        raise TreeFormatError(f"tree indexes a {n}x{d} dataset, got {ds.n}x{ds.d}")

    def read_node() -> TreeNode:
        (tag,) = struct.unpack("<B", _read_exact(fh, 1))
        if tag == 0:
            (count,) = struct.unpack("<Q", _read_exact(fh, 8))
            idx = np.frombuffer(_read_exact(fh, 8 * count), dtype="<u8").astype(np.int64)
            return Leaf(idx)
        if tag != 1:
            raise TreeFormatError(f"bad node tag {tag}")
        (flags,) = struct.unpack("<B", _read_exact(fh, 1))
        u = np.frombuffer(_read_exact(fh, 8 * d), dtype="<f8").astype(np.float64)
        extra = {}
        if flags & 1:
            (extra["perturbed"],) = struct.unpack("<d", _read_exact(fh, 8))
        if flags & 2:
            extra["median"], extra["low"], extra["high"] = struct.unpack(
                "<ddd", _read_exact(fh, 24))
        left = read_node()
        right = read_node()
        return Internal(SplitRule(u, **extra), left, right)

    root = read_node()
    return PartitionTree(kinds[code], alpha, leaf_size, root, seed, ds)


def tree_from_bytes(raw: bytes, data) -> PartitionTree:
    return read_tree(io.BytesIO(raw), data)


def expected_depth_bound(kind: TreeKind, n: int, leaf_size: int) -> int:
    """ceil(log_b(n / n_o)) + 1 with b = 4/3 (rp) or 2 (virtual-spill)."""
    if n <= leaf_size:
        return 0
    base = 4 / 3 if TreeKind(kind) is TreeKind.RP else 2.0
    return math.ceil(math.log(n / leaf_size, base)) + 1
