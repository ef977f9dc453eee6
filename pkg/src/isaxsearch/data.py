"""Random-walk generation, z-normalization and the raw float32 file format.

Files are headerless: series of ``length`` little-endian float32 values
concatenated back to back. The series length travels out of band.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateSeriesError",
    "DatasetFormatError",
    "LoadReport",
    "generate_random_walk",
    "random_walk_series",
    "znormalize",
    "znormalize_rows",
    "load_dataset",
    "save_dataset",
    "pad_to_multiple",
]

_DTYPE = np.dtype("<f4")
_STD_EPS = 1e-12


class DegenerateSeriesError(ValueError):
    """Series too close to constant to be z-normalized."""


class DatasetFormatError(ValueError):
    """File size does not match the declared series length."""


def random_walk_series(seed: int, i: int, length: int) -> np.ndarray:
    """Series ``i`` of the walk stream for ``seed``; independent of every other ``i``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
    return np.cumsum(rng.standard_normal(length))


def generate_random_walk(count: int, length: int, seed: int = 0, *,
                         znorm: bool = False, n_threads: int = 1) -> np.ndarray:
    """``count`` random walks of ``length`` points as a float32 array.

    Each walk starts with an N(0, 1) draw and adds a fresh N(0, 1) step at
    every point.
    """
    if count < 1 or length < 1:
        raise ValueError(f"count and length must be >= 1, got {count}, {length}")
    out = np.empty((count, length), dtype=np.float32)

    def fill(lo, hi):
        block = np.empty((hi - lo, length))
        for i in range(lo, hi):
            block[i - lo] = random_walk_series(seed, i, length)
        out[lo:hi] = znormalize_rows(block, zero_degenerate=True) if znorm else block

    n_threads = max(1, min(n_threads, count))
    bounds = np.linspace(0, count, n_threads + 1).astype(int)
    if n_threads == 1:
        fill(0, count)
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            list(pool.map(fill, bounds[:-1], bounds[1:]))
    return out


def znormalize(series) -> np.ndarray:
    """Shift to mean 0 and scale to population standard deviation 1."""
    x = np.asarray(series, dtype=np.float64)
    std = x.std()
    if std <= _STD_EPS:
        raise DegenerateSeriesError(f"series is near-constant (std={std:.3g})")
    return (x - x.mean()) / std


def znormalize_rows(data, *, zero_degenerate: bool = False) -> np.ndarray:
    """Row-wise `znormalize`; degenerate rows raise unless ``zero_degenerate``."""
    x = np.asarray(data, dtype=np.float64)
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    bad = std[:, 0] <= _STD_EPS
    if bad.any() and not zero_degenerate:
        raise DegenerateSeriesError(f"{int(bad.sum())} near-constant series, first at row {int(np.argmax(bad))}")
    std[bad] = 1.0
    out = (x - mean) / std
    out[bad] = 0.0
    return out


@dataclass(frozen=True)
class LoadReport:
    path: str
    count: int
    original_length: int
    length: int

    @property
    def padded(self) -> bool:
        return self.length != self.original_length


def pad_to_multiple(data: np.ndarray, w: int) -> np.ndarray:
    """Repeat each series' last value until the length is a multiple of ``w``."""
    n = data.shape[1]
    extra = (-n) % w
    if not extra:
        return data
    return np.pad(data, ((0, 0), (0, extra)), mode="edge")


def load_dataset(path, length: int, *, w: int | None = None):
    """Read a headerless float32 file of ``length``-point series.

    With ``w`` given, series are padded to a multiple of ``w``. Returns
    ``(data, report)``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    size = os.path.getsize(path)
    row_bytes = length * _DTYPE.itemsize
    if size == 0 or size % row_bytes:
        raise DatasetFormatError(
            f"{path}: {size} bytes is not a positive multiple of {row_bytes} "
            f"({length} float32 values); {size % row_bytes} trailing bytes")
    data = np.fromfile(path, dtype=_DTYPE).reshape(-1, length)
    if data.dtype != np.float32:
        data = data.astype(np.float32)
    if not np.isfinite(data).all():
        raise DatasetFormatError(f"{path}: contains non-finite values")
    if w is not None:
        data = pad_to_multiple(data, w)
    return np.ascontiguousarray(data), LoadReport(str(path), data.shape[0], length, data.shape[1])


def save_dataset(path, dataset) -> None:
    arr = np.asarray(dataset)
    if arr.ndim != 2:
        raise ValueError("dataset must be two-dimensional (count, length)")
    arr.astype(_DTYPE, copy=False).tofile(path)
