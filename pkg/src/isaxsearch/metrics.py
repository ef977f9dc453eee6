"""Distance kernels: Euclidean, DTW, LB_Keogh and the iSAX lower bounds.

Hot loops are numba-compiled with ``nogil`` so that search and scan
workers running on Python threads execute them concurrently. All sums
run left to right in float64, whatever the storage precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view

from .core import SaxWord, region_tables
from .summarize import paa

__all__ = [
    "ABANDONED",
    "BLOCK",
    "Envelope",
    "euclidean",
    "dtw",
    "keogh_envelope",
    "lb_keogh",
    "mindist_paa_isax",
    "mindist_envelope_isax",
    "word_bounds",
]

#: Returned by abandoning kernels; compares greater than any threshold.
ABANDONED = math.inf

#: Points summed between two abandonment checks.
BLOCK = 8


def _as_series(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    return x


def _check_pair(a, b):
    a, b = _as_series(a), _as_series(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} != {b.shape[0]}")
    return a, b


def _limit_sq(abandon_at) -> float:
    if abandon_at is None:
        return math.inf
    return float(abandon_at) * float(abandon_at)


# --------------------------------------------------------------------------
# compiled kernels

@njit(cache=True, nogil=True)
def _sq_euclidean(a, b, limit_sq):
    n = a.shape[0]
    total = 0.0
    i = 0
    while i < n:
        end = min(i + 8, n)
        for j in range(i, end):
            d = np.float64(a[j]) - np.float64(b[j])
            total += d * d
        if total > limit_sq:
            return np.inf
        i = end
    return total


@njit(cache=True, nogil=True)
def _sq_dtw(a, b, r, limit_sq):
    # band cell k of row i is column j = i - r + k
    n = a.shape[0]
    width = 2 * r + 1
    prev = np.full(width, np.inf)
    cur = np.full(width, np.inf)
    for i in range(n):
        row_min = np.inf
        for k in range(width):
            j = i - r + k
            if j < 0 or j >= n:
                cur[k] = np.inf
                continue
            d = np.float64(a[i]) - np.float64(b[j])
            cost = d * d
            if i == 0 and j == 0:
                best = 0.0
            else:
                best = prev[k]  # (i-1, j-1)
                if k + 1 < width and prev[k + 1] < best:  # (i-1, j)
                    best = prev[k + 1]
                if k > 0 and cur[k - 1] < best:  # (i, j-1)
                    best = cur[k - 1]
            v = cost + best
            cur[k] = v
            if v < row_min:
                row_min = v
        if row_min > limit_sq:
            return np.inf
        prev, cur = cur, prev
    return prev[r]


@njit(cache=True, nogil=True)
def _sq_lb_keogh(upper, lower, c, limit_sq):
    total = 0.0
    n = c.shape[0]
    i = 0
    while i < n:
        end = min(i + 8, n)
        for j in range(i, end):
            v = np.float64(c[j])
            if v > upper[j]:
                d = v - upper[j]
                total += d * d
            elif v < lower[j]:
                d = lower[j] - v
                total += d * d
        if total > limit_sq:
            return np.inf
        i = end
    return total


@njit(cache=True, nogil=True)
def _sq_mindist_words(qlo, qhi, words, lo_tab, hi_tab, row, seg_len):
    # gap between the query interval [qlo, qhi] and each symbol's region
    total = 0.0
    for i in range(words.shape[1]):
        s = words[row, i]
        lo = lo_tab[s]
        hi = hi_tab[s]
        if qhi[i] < lo:
            d = lo - qhi[i]
            total += d * d
        elif qlo[i] > hi:
            d = qlo[i] - hi
            total += d * d
    return seg_len * total


@njit(cache=True, nogil=True)
def leaf_scan(raw, positions, words, lo_tab, hi_tab, seg_len, q, qlo, qhi,
              upper, lower, window, bsf):
    """Evaluate one leaf: entry lower bound, then the true distance.

    ``window < 0`` selects Euclidean distance; otherwise banded DTW with a
    raw-series LB_Keogh filter against ``upper``/``lower``. Returns
    ``(best, best_position, lb_calcs, real_calcs)`` where ``best`` is
    ``inf`` if nothing beat ``bsf``.
    """
    limit = bsf * bsf
    best = np.inf
    best_pos = -1
    n_real = 0
    m = positions.shape[0]
    for e in range(m):
        if _sq_mindist_words(qlo, qhi, words, lo_tab, hi_tab, e, seg_len) >= limit:
            continue
        series = raw[positions[e]]
        if window < 0:
            n_real += 1
            d = _sq_euclidean(series, q, limit)
        else:
            if _sq_lb_keogh(upper, lower, series, limit) >= limit:
                continue
            n_real += 1
            d = _sq_dtw(q, series, window, limit)
        if d < limit:
            limit = d
            best = d
            best_pos = positions[e]
    if best_pos >= 0:
        best = math.sqrt(best)
    return best, best_pos, m, n_real


@njit(cache=True, nogil=True)
def scan_range(raw, start, stop, q, window):
    """Exhaustive scan of ``raw[start:stop]`` with a local best-so-far.

    Returns the squared best distance and the lowest position achieving it.
    """
    limit = np.inf
    best_pos = -1
    for p in range(start, stop):
        if window < 0:
            d = _sq_euclidean(raw[p], q, limit)
        else:
            d = _sq_dtw(q, raw[p], window, limit)
        if d < limit or best_pos < 0:
            limit = d
            best_pos = p
    return limit, best_pos


# --------------------------------------------------------------------------
# public API

def euclidean(a, b, abandon_at: float | None = None) -> float:
    """Euclidean distance; ``ABANDONED`` once the running sum passes ``abandon_at``."""
    a, b = _check_pair(a, b)
    sq = _sq_euclidean(a, b, _limit_sq(abandon_at))
    return ABANDONED if sq == math.inf else math.sqrt(sq)


def dtw(a, b, window: int, abandon_at: float | None = None) -> float:
    """DTW under a Sakoe-Chiba band of half-width ``window``.

    The point cost is the squared difference and the result is the square
    root of the best path cost, so it is on the same scale as `euclidean`.
    """
    a, b = _check_pair(a, b)
    n = a.shape[0]
    if not 0 <= window < n:
        raise ValueError(f"window must be in [0, {n}), got {window}")
    sq = _sq_dtw(a, b, int(window), _limit_sq(abandon_at))
    return ABANDONED if sq == math.inf else math.sqrt(sq)


@dataclass(frozen=True)
class Envelope:
    upper: np.ndarray
    lower: np.ndarray
    upper_paa: np.ndarray
    lower_paa: np.ndarray
    window: int

    @property
    def n(self) -> int:
        return self.upper.shape[0]


def keogh_envelope(query, window: int, w: int = 16) -> Envelope:
    """Running max/min of ``query`` over ``[i - window, i + window]``, plus their PAA."""
    q = _as_series(query).astype(np.float64)
    n = q.shape[0]
    if not 0 <= window < n:
        raise ValueError(f"window must be in [0, {n}), got {window}")
    # edge padding replicates endpoint values, which equals clamping the window
    padded = np.pad(q, window, mode="edge")
    views = sliding_window_view(padded, 2 * window + 1)
    upper = views.max(axis=1)
    lower = views.min(axis=1)
    return Envelope(upper, lower, paa(upper, w), paa(lower, w), int(window))


def lb_keogh(env: Envelope, candidate) -> float:
    c = _as_series(candidate)
    if c.shape[0] != env.n:
        raise ValueError(f"length mismatch: {c.shape[0]} != {env.n}")
    return math.sqrt(_sq_lb_keogh(env.upper, env.lower, c, math.inf))


def word_bounds(word: SaxWord) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment value interval covered by ``word``."""
    lo = np.empty(word.w)
    hi = np.empty(word.w)
    for i, (p, b) in enumerate(zip(word.prefixes(), word.card_bits)):
        lo_tab, hi_tab = region_tables(int(b))
        lo[i] = lo_tab[p]
        hi[i] = hi_tab[p]
    return lo, hi


def interval_mindist(qlo, qhi, lo, hi, seg_len: float) -> np.ndarray:
    """Lower bound from per-segment query intervals to region intervals.

    Works on a single word (1-d ``lo``/``hi``) or a stack of them (2-d).
    """
    gap = np.maximum(np.maximum(lo - qhi, qlo - hi), 0.0)
    return np.sqrt(seg_len * np.einsum("...i,...i->...", gap, gap))


def mindist_paa_isax(query_paa, word: SaxWord, n: int) -> float:
    """Lower bound on the Euclidean distance from a query to any series under ``word``."""
    q = np.asarray(query_paa, dtype=np.float64)
    if q.shape != (word.w,):
        raise ValueError(f"query PAA has {q.shape[0]} segments, word has {word.w}")
    lo, hi = word_bounds(word)
    return float(interval_mindist(q, q, lo, hi, n / word.w))


def mindist_envelope_isax(env: Envelope, word: SaxWord, n: int) -> float:
    """Lower bound on the DTW distance from the enveloped query to any series under ``word``."""
    if env.upper_paa.shape != (word.w,):
        raise ValueError(f"envelope has {env.upper_paa.shape[0]} segments, word has {word.w}")
    lo, hi = word_bounds(word)
    return float(interval_mindist(env.lower_paa, env.upper_paa, lo, hi, n / word.w))
