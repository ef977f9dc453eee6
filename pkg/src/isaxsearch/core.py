"""Domain types, configuration and Gaussian breakpoint tables."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

__all__ = [
    "IndexConfig",
    "SaxWord",
    "breakpoints_for",
    "region_bounds",
    "region_tables",
    "inverse_normal_cdf",
    "normal_cdf",
]

QUEUE_MODES = ("single", "multi")


def _default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class IndexConfig:
    """Parameters shared by index construction and query answering.

    ``n`` is the series length after padding. Worker counts default to the
    hardware parallelism of the host.
    """

    n: int = 256
    w: int = 16
    max_card_bits: int = 8
    leaf_capacity: int = 2000
    chunk_size: int = 20000
    n_index_workers: int = field(default_factory=_default_workers)
    n_search_workers: int = field(default_factory=_default_workers)
    n_queues: int = 24
    initial_buffer_part_size: int = 5
    queue_mode: str = "multi"

    def __post_init__(self):
        if self.w < 1:
            raise ValueError(f"w must be >= 1, got {self.w}")
        if not 1 <= self.max_card_bits <= 8:
            raise ValueError(f"max_card_bits must be in [1, 8], got {self.max_card_bits}")
        if self.leaf_capacity < 2:
            raise ValueError(f"leaf_capacity must be >= 2, got {self.leaf_capacity}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.n_queues < 1:
            raise ValueError(f"n_queues must be >= 1, got {self.n_queues}")
        if self.n_index_workers < 1 or self.n_search_workers < 1:
            raise ValueError("worker counts must be >= 1")
        if self.initial_buffer_part_size < 1:
            raise ValueError("initial_buffer_part_size must be >= 1")
        if self.queue_mode not in QUEUE_MODES:
            raise ValueError(f"queue_mode must be one of {QUEUE_MODES}, got {self.queue_mode!r}")
        if self.n < self.w or self.n % self.w:
            raise ValueError(f"series length {self.n} must be a positive multiple of w={self.w}")

    @property
    def segment_length(self) -> int:
        return self.n // self.w

    @property
    def effective_queues(self) -> int:
        """Queue count actually used: one in single-queue mode."""
        return 1 if self.queue_mode == "single" else self.n_queues

    def replace(self, **changes) -> "IndexConfig":
        return replace(self, **changes)


# Acklam's rational approximation coefficients for the inverse normal CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def inverse_normal_cdf(p: float) -> float:
    """Standard normal quantile: rational approximation plus one Newton step."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    density = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x - (normal_cdf(x) - p) / density


def _check_cardinality(cardinality: int) -> int:
    c = int(cardinality)
    if c != cardinality or c < 2 or c > 256:
        raise ValueError(f"cardinality must be an integer in [2, 256], got {cardinality}")
    return c


@lru_cache(maxsize=None)
def _breakpoints(c: int) -> tuple[float, ...]:
    half = [inverse_normal_cdf((i + 1) / c) for i in range((c - 1) // 2)]
    # exact symmetry: mirror the lower half; even cardinalities pin the median at zero
    middle = [0.0] if c % 2 == 0 else []
    return tuple(half + middle + [-x for x in reversed(half)])


def breakpoints_for(cardinality: int) -> np.ndarray:
    """Return the ``cardinality - 1`` standard-normal quantile thresholds.

    Any cardinality in [2, 256] is accepted; iSAX symbols only use powers
    of two.

    Region ``s`` covers ``[b[s-1], b[s])``; a value equal to a threshold
    belongs to the upper region.
    """
    arr = np.array(_breakpoints(_check_cardinality(cardinality)), dtype=np.float64)
    arr.flags.writeable = False
    return arr


def region_bounds(symbol: int, card_bits: int) -> tuple[float, float]:
    """Value interval of region ``symbol`` at cardinality ``2**card_bits``."""
    if not 1 <= card_bits <= 8:
        raise ValueError(f"card_bits must be in [1, 8], got {card_bits}")
    c = 1 << card_bits
    if not 0 <= symbol < c:
        raise ValueError(f"symbol {symbol} out of range for {card_bits} bits")
    bps = _breakpoints(c)
    lower = -math.inf if symbol == 0 else bps[symbol - 1]
    upper = math.inf if symbol == c - 1 else bps[symbol]
    return lower, upper


@lru_cache(maxsize=None)
def region_tables(card_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper region edges for every symbol at ``card_bits`` bits."""
    c = 1 << card_bits
    bps = np.array(_breakpoints(c))
    lo = np.concatenate(([-np.inf], bps))
    hi = np.concatenate((bps, [np.inf]))
    lo.flags.writeable = False
    hi.flags.writeable = False
    return lo, hi


@dataclass(eq=False)
class SaxWord:
    """iSAX word: left-aligned symbols with a per-segment cardinality.

    Only the top ``card_bits[i]`` bits of ``symbols[i]`` are meaningful;
    the remaining low bits are zero for node words.
    """

    symbols: np.ndarray
    card_bits: np.ndarray
    max_card_bits: int = 8

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.uint8)
        self.card_bits = np.asarray(self.card_bits, dtype=np.uint8)
        if self.symbols.shape != self.card_bits.shape or self.symbols.ndim != 1:
            raise ValueError("symbols and card_bits must be 1-d arrays of equal length")
        if np.any(self.card_bits < 1) or np.any(self.card_bits > self.max_card_bits):
            raise ValueError("card_bits out of range")
        if np.any(self.symbols >= (1 << self.max_card_bits)):
            raise ValueError("symbol exceeds max cardinality")

    @classmethod
    def full(cls, symbols, max_card_bits: int = 8) -> "SaxWord":
        symbols = np.asarray(symbols, dtype=np.uint8)
        return cls(symbols, np.full(symbols.shape, max_card_bits, dtype=np.uint8), max_card_bits)

    @property
    def w(self) -> int:
        return self.symbols.shape[0]

    def prefixes(self) -> np.ndarray:
        """Per-segment symbol at its own cardinality (right-aligned)."""
        shift = (self.max_card_bits - self.card_bits).astype(np.uint8)
        return (self.symbols >> shift).astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, SaxWord):
            return NotImplemented
        return (self.max_card_bits == other.max_card_bits
                and np.array_equal(self.card_bits, other.card_bits)
                and np.array_equal(self.prefixes(), other.prefixes()))

    def __hash__(self):
        return hash((self.max_card_bits, self.card_bits.tobytes(), self.prefixes().tobytes()))

    def __repr__(self):
        parts = [format(int(p), f"0{int(b)}b") for p, b in zip(self.prefixes(), self.card_bits)]
        return f"SaxWord({' '.join(parts)})"
