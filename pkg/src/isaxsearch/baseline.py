"""Parallel brute-force scan, the ground truth for every index answer."""

from __future__ import annotations

import math
import threading

import numpy as np

from .metrics import scan_range
from .query import ED, EmptyIndexError, Measure

__all__ = ["scan_nn"]


def scan_nn(dataset, query, measure: Measure = ED, n_threads: int = 1) -> tuple[float, int]:
    """Exact nearest neighbour by scanning every series.

    The dataset is cut into ``n_threads`` contiguous ranges scanned
    independently, each with its own best-so-far for early abandonment.
    Local bests are merged once at the end; ties go to the lowest position.
    """
    raw = np.ascontiguousarray(dataset)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise EmptyIndexError("dataset is empty")
    q = np.ascontiguousarray(query, dtype=np.float64)
    if q.shape != (raw.shape[1],):
        raise ValueError(f"query length {q.shape} does not match series length {raw.shape[1]}")
    if measure.is_dtw and measure.window >= raw.shape[1]:
        raise ValueError("DTW window must be smaller than the series length")
    window = measure.kernel_window
    n_threads = max(1, min(int(n_threads), raw.shape[0]))
    bounds = np.linspace(0, raw.shape[0], n_threads + 1).astype(np.int64)
    results: list = [None] * n_threads

    def work(t):
        results[t] = scan_range(raw, int(bounds[t]), int(bounds[t + 1]), q, window)

    if n_threads == 1:
        work(0)
    else:
        threads = [threading.Thread(target=work, args=(t,)) for t in range(n_threads)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    best_sq, best_pos = math.inf, -1
    for sq, pos in results:  # ranges are in position order, so strict < keeps the lowest
        if sq < best_sq:
            best_sq, best_pos = sq, int(pos)
    return math.sqrt(best_sq), best_pos
