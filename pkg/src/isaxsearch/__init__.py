"""In-memory iSAX index with parallel construction and exact 1-NN search."""

from .baseline import scan_nn
from .core import IndexConfig, SaxWord, breakpoints_for, region_bounds
from .data import generate_random_walk, load_dataset, save_dataset, znormalize
from .index import Index, build_index, validate_index
from .metrics import ABANDONED, dtw, euclidean, keogh_envelope, lb_keogh
from .query import ED, Measure, SearchConfig, SearchStats, approximate_search, exact_search

__all__ = [
    "ABANDONED",
    "ED",
    "Index",
    "IndexConfig",
    "Measure",
    "SaxWord",
    "SearchConfig",
    "SearchStats",
    "approximate_search",
    "breakpoints_for",
    "build_index",
    "dtw",
    "euclidean",
    "exact_search",
    "generate_random_walk",
    "keogh_envelope",
    "lb_keogh",
    "load_dataset",
    "region_bounds",
    "save_dataset",
    "scan_nn",
    "validate_index",
    "znormalize",
]
