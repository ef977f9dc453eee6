"""PAA and iSAX summaries, root keys and prefix matching."""

from __future__ import annotations

import numpy as np
from numba import njit

from .core import IndexConfig, SaxWord, breakpoints_for

__all__ = ["paa", "convert_to_isax", "root_key", "matches_prefix", "summarize_block"]


def paa(series, w: int) -> np.ndarray:
    """Per-segment means of ``series`` split into ``w`` equal segments."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    n = x.shape[0]
    if w < 1 or n < w or n % w:
        raise ValueError(f"series length {n} is not divisible by w={w}")
    return x.reshape(w, n // w).mean(axis=1)


@njit(cache=True, nogil=True)
def _summarize_block(raw, start, stop, w, breakpoints, max_card_bits, words, keys):
    seg = raw.shape[1] // w
    top = max_card_bits - 1
    for r in range(start, stop):
        key = 0
        for i in range(w):
            acc = 0.0
            for j in range(i * seg, (i + 1) * seg):
                acc += raw[r, j]
            mean = acc / seg
            # count of breakpoints <= mean
            lo = 0
            hi = breakpoints.shape[0]
            while lo < hi:
                mid = (lo + hi) >> 1
                if breakpoints[mid] <= mean:
                    lo = mid + 1
                else:
                    hi = mid
            words[r - start, i] = lo
            key = (key << 1) | (lo >> top)
        keys[r - start] = key


def summarize_block(raw: np.ndarray, start: int, stop: int, config: IndexConfig):
    """iSAX words (full cardinality) and root keys for ``raw[start:stop]``.

    Releases the GIL while converting, so index workers run concurrently.
    """
    count = stop - start
    words = np.empty((count, config.w), dtype=np.uint8)
    keys = np.empty(count, dtype=np.int64)
    if count:
        _summarize_block(raw, start, stop, config.w,
                         breakpoints_for(1 << config.max_card_bits),
                         config.max_card_bits, words, keys)
    return words, keys


def convert_to_isax(series, config: IndexConfig) -> SaxWord:
    x = np.asarray(series)
    if x.ndim != 1 or x.shape[0] != config.n:
        raise ValueError(f"series length must be {config.n}")
    words, _ = summarize_block(x.reshape(1, -1), 0, 1, config)
    return SaxWord.full(words[0], config.max_card_bits)


def root_key(word: SaxWord, w: int | None = None) -> int:
    """One bit per segment (its top bit), segment 0 most significant."""
    if w is not None and w != word.w:
        raise ValueError(f"word has {word.w} segments, expected {w}")
    top = (word.symbols >> (word.max_card_bits - 1)).astype(np.int64)
    key = 0
    for bit in top:
        key = (key << 1) | int(bit)
    return key


def matches_prefix(word: SaxWord, node_word: SaxWord) -> bool:
    """True iff ``word`` lies under ``node_word`` on every segment."""
    if word.w != node_word.w or word.max_card_bits != node_word.max_card_bits:
        raise ValueError("words have different shapes")
    if np.any(node_word.card_bits > word.card_bits):
        raise ValueError("node word is finer than the word being tested")
    shift = (word.max_card_bits - node_word.card_bits).astype(np.uint8)
    return bool(np.array_equal(word.symbols >> shift, node_word.symbols >> shift))
