from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .linalg import as_points


@dataclass
class Dataset:
    """n points in R^d (row-major) plus where they came from."""

    points: np.ndarray
    kind: str = "external"
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.points.shape[0] < 1:
            raise ValueError("a dataset needs at least one point")

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def fingerprint(self) -> str:
        """Short content hash, used to tie serialized trees to their data."""
        h = hashlib.sha256()
        h.update(np.asarray(self.points.shape, dtype="<u8").tobytes())
        h.update(np.ascontiguousarray(self.points, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def as_dataset(data) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset(np.asarray(data))
