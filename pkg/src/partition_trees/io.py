"""Dataset files, tree files and report files.

Binary dataset layout (little-endian)::

    magic "PDAT" | version u16 | n u64 | d u32 | n*d f64 row-major

CSV datasets have one point per row; an optional first row of column names
(``x1,...,xd``) is skipped. Values are written with 17 significant digits so
a CSV round trip is exact.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .dataset import Dataset
from .trees import PartitionTree, TreeFormatError, read_tree, write_tree

PathLike = Union[str, Path]

DATA_MAGIC = b"PDAT"
DATA_VERSION = 1
_DATA_HEADER = struct.Struct("<4sHQI")


class DatasetFormatError(ValueError):
    pass


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"unknown dataset format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"


def save_dataset(data: Dataset | np.ndarray, path: PathLike, fmt: str | None = None) -> None:
    path = Path(path)
    pts = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    n, d = pts.shape
    if _infer_format(path, fmt) == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(d)])
            for row in pts:
                w.writerow([repr(float(v)) for v in row])
        return
    with open(path, "wb") as fh:
        fh.write(_DATA_HEADER.pack(DATA_MAGIC, DATA_VERSION, n, d))
        fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header row
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric entry in {row!r}")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def _load_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _DATA_HEADER.size:
        raise DatasetFormatError(
            f"{path}: header needs {_DATA_HEADER.size} bytes, file has {len(raw)}")
    magic, version, n, d = _DATA_HEADER.unpack_from(raw)
    if magic != DATA_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != DATA_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version} at offset 4")
    expected = _DATA_HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes for a {n}x{d} matrix, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_DATA_HEADER.size).reshape(n, d).astype(
        np.float64)


def load_points(path: PathLike, fmt: str | None = None) -> np.ndarray:
    path = Path(path)
    pts = _load_csv(path) if _infer_format(path, fmt) == "csv" else _load_binary(path)
    bad = ~np.isfinite(pts)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"{path}: non-finite value at row {i}, column {j}")
    return pts


def load_dataset(path: PathLike, fmt: str | None = None) -> Dataset:
    return Dataset(load_points(path, fmt), "external", {"path": str(path)})


def save_tree(tree: PartitionTree, path: PathLike) -> None:
    with open(path, "wb") as fh:
        write_tree(tree, fh)


def load_tree(path: PathLike, data) -> PartitionTree:
    with open(path, "rb") as fh:
        tree = read_tree(fh, data)
        if fh.read(1):
            raise TreeFormatError(f"{path}: trailing bytes after the node stream")
    return tree


def write_json(obj, path: PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path: PathLike):
    with open(path) as fh:
        return json.load(fh)
