"""Exact 1-NN query answering over a built index.

A query runs in two phases separated by a barrier. In the first, search
workers claim root subtrees from a shared counter, prune them against the
best-so-far (BSF) distance, and spread the surviving leaves round-robin
over the priority queues. In the second, workers pop leaves in lower-bound
order, evaluate them, and tighten the shared BSF.
"""

from __future__ import annotations

import heapq
import itertools
import math
import threading
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .core import IndexConfig, SaxWord, region_tables
from .index import Index, IndexNode
from .metrics import Envelope, interval_mindist, keogh_envelope, leaf_scan
from .summarize import convert_to_isax, paa, root_key

__all__ = [
    "Measure",
    "ED",
    "SearchConfig",
    "SearchStats",
    "SharedBsf",
    "PriorityQueue",
    "QueryContext",
    "EmptyIndexError",
    "approximate_search",
    "exact_search",
    "traverse_root_subtree",
    "process_queue",
    "calculate_real_distance_leaf",
    "worker_next_queue",
]


class EmptyIndexError(ValueError):
    pass


@dataclass(frozen=True)
class Measure:
    """Distance measure: ``Measure("ed")`` or ``Measure("dtw", window)``."""

    kind: str = "ed"
    window: int = 0

    def __post_init__(self):
        if self.kind not in ("ed", "dtw"):
            raise ValueError(f"unknown measure {self.kind!r}")
        if self.window < 0:
            raise ValueError("window must be >= 0")

    @classmethod
    def dtw(cls, window: int) -> "Measure":
        return cls("dtw", int(window))

    @classmethod
    def dtw_fraction(cls, n: int, fraction: float) -> "Measure":
        """DTW with a window of ``floor(fraction * n)`` points."""
        return cls("dtw", int(math.floor(fraction * n)))

    @property
    def is_dtw(self) -> bool:
        return self.kind == "dtw"

    @property
    def kernel_window(self) -> int:
        # leaf and scan kernels take a negative window to mean Euclidean
        return self.window if self.is_dtw else -1

    def __str__(self):
        return f"dtw({self.window})" if self.is_dtw else "ed"


ED = Measure("ed")


@dataclass(frozen=True)
class SearchConfig:
    n_search_workers: int = 1
    n_queues: int = 24
    queue_mode: str = "multi"

    def __post_init__(self):
        if self.n_search_workers < 1 or self.n_queues < 1:
            raise ValueError("worker and queue counts must be >= 1")
        if self.queue_mode not in ("single", "multi"):
            raise ValueError(f"queue_mode must be 'single' or 'multi', got {self.queue_mode!r}")

    @property
    def effective_queues(self) -> int:
        return 1 if self.queue_mode == "single" else self.n_queues

    @classmethod
    def from_index_config(cls, config: IndexConfig) -> "SearchConfig":
        return cls(config.n_search_workers, config.n_queues, config.queue_mode)


@dataclass
class SearchStats:
    lb_node_calcs: int = 0
    lb_entry_calcs: int = 0
    real_dist_calcs: int = 0
    bsf_updates: int = 0
    pruned_subtrees: int = 0
    queue_insertions: int = 0
    leaves_evaluated: int = 0

    def merge(self, other: "SearchStats") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_line(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.as_dict().items())


class SharedBsf:
    """Best-so-far distance shared by the search workers of one query.

    Reads are plain attribute loads; writes take the lock and re-check, so
    the value never increases.
    """

    def __init__(self, value: float = math.inf, holder: int = -1):
        self.value = value
        self.holder = holder
        self.history: list[float] = []
        self._lock = threading.Lock()

    def update(self, dist: float, position: int) -> bool:
        if not dist < self.value:
            return False
        with self._lock:
            if dist < self.value:
                self.value = dist
                self.holder = position
                self.history.append(dist)
                return True
        return False


class PriorityQueue:
    """Lock-protected binary min-heap of (lower bound, leaf) entries."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self._lock = threading.Lock()
        self.finished = False

    def push(self, dist: float, leaf: IndexNode) -> None:
        with self._lock:
            heapq.heappush(self._heap, (dist, next(self._seq), leaf))

    def pop(self):
        """Return ``(dist, leaf)`` with the smallest dist, or None if empty."""
        with self._lock:
            if not self._heap:
                return None
            dist, _, leaf = heapq.heappop(self._heap)
        return dist, leaf

    def __len__(self):
        return len(self._heap)


@dataclass
class QueryContext:
    """Per-query precomputation shared read-only by all search workers."""

    index: Index
    measure: Measure
    query: np.ndarray
    qlo: np.ndarray
    qhi: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    node_lb: list[float]
    word_symbols: np.ndarray
    envelope: Envelope | None = None
    skip_leaf: IndexNode | None = field(default=None, repr=False)

    @classmethod
    def build(cls, index: Index, query, measure: Measure = ED) -> "QueryContext":
        config = index.config
        q = np.ascontiguousarray(query, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != config.n:
            raise ValueError(f"query length must be {config.n}")
        env = None
        if measure.is_dtw:
            if measure.window >= config.n:
                raise ValueError(f"DTW window {measure.window} must be < {config.n}")
            env = keogh_envelope(q, measure.window, config.w)
            qlo, qhi = env.lower_paa, env.upper_paa
            upper, lower = env.upper, env.lower
        else:
            qlo = qhi = paa(q, config.w)
            upper = lower = np.empty(0)
        seg_len = config.n / config.w
        node_lb = interval_mindist(qlo, qhi, index.node_lo, index.node_hi, seg_len).tolist()
        word = convert_to_isax(q, config)
        return cls(index, measure, q, qlo, qhi, upper, lower, node_lb, word.symbols, env)

    @property
    def root_key(self) -> int:
        return root_key(SaxWord.full(self.word_symbols, self.index.config.max_card_bits))


def calculate_real_distance_leaf(ctx: QueryContext, leaf: IndexNode, bsf: float,
                                 stats: SearchStats | None = None):
    """Best true distance in ``leaf`` below ``bsf``.

    Every entry first gets its full-cardinality lower bound; only entries
    below ``bsf`` get a true distance (for DTW, after an LB_Keogh filter),
    computed with early abandonment at the running best. Returns
    ``(dist, position)``, or ``(inf, -1)`` when no entry beats ``bsf``.
    """
    config = ctx.index.config
    lo_tab, hi_tab = region_tables(config.max_card_bits)
    best, pos, n_lb, n_real = leaf_scan(
        ctx.index.raw, leaf.positions, leaf.words, lo_tab, hi_tab,
        config.n / config.w, ctx.query, ctx.qlo, ctx.qhi, ctx.upper, ctx.lower,
        ctx.measure.kernel_window, float(bsf))
    if stats is not None:
        stats.lb_entry_calcs += n_lb
        stats.real_dist_calcs += n_real
        stats.leaves_evaluated += 1
    return best, int(pos)


def _approximate_leaf(ctx: QueryContext) -> IndexNode:
    index = ctx.index
    root = index.root_child(ctx.root_key)
    if root is None:
        # no subtree shares the query's key: start from the closest one
        ids = np.array([r.node_id for r in index.root_nodes])
        root = index.root_nodes[int(np.argmin(np.asarray(ctx.node_lb)[ids]))]
    node = root
    m = index.config.max_card_bits
    while not node.is_leaf:
        seg = node.split_segment
        b = int(node.word.card_bits[seg])
        bit = (int(ctx.word_symbols[seg]) >> (m - b - 1)) & 1
        child = node.children[bit]
        if child.size == 0:
            child = node.children[1 - bit]
        node = child
    return node


def approximate_search(index: Index, query, measure: Measure = ED,
                       ctx: QueryContext | None = None, stats: SearchStats | None = None):
    """Seed distance from the leaf the query's own word descends to.

    Returns ``(dist, position, leaf)``.
    """
    if len(index) == 0 or not index.root_nodes:
        raise EmptyIndexError("index is empty")
    if ctx is None:
        ctx = QueryContext.build(index, query, measure)
    leaf = _approximate_leaf(ctx)
    dist, pos = calculate_real_distance_leaf(ctx, leaf, math.inf, stats)
    return dist, pos, leaf


def traverse_root_subtree(ctx: QueryContext, node: IndexNode, queues: list[PriorityQueue],
                          cursor: list[int], bsf: SharedBsf, stats: SearchStats) -> None:
    """Prune ``node``'s subtree against the BSF and enqueue surviving leaves.

    ``cursor`` is the worker's one-element round-robin queue pointer.
    """
    node_lb = ctx.node_lb
    n_queues = len(queues)
    stack = [node]
    while stack:
        nd = stack.pop()
        dist = node_lb[nd.node_id]
        stats.lb_node_calcs += 1
        if dist >= bsf.value:
            stats.pruned_subtrees += 1
            continue
        if nd.is_leaf:
            if nd is ctx.skip_leaf or nd.count == 0:
                continue
            queues[cursor[0]].push(dist, nd)
            stats.queue_insertions += 1
            cursor[0] = (cursor[0] + 1) % n_queues
        else:
            stack.append(nd.children[1])
            stack.append(nd.children[0])


def process_queue(queue: PriorityQueue, ctx: QueryContext, bsf: SharedBsf,
                  stats: SearchStats, popped: list | None = None) -> SearchStats:
    """Pop leaves in lower-bound order until one is no better than the BSF."""
    while True:
        item = queue.pop()
        if item is None:
            break
        dist, leaf = item
        if popped is not None:
            popped.append(dist)
        if dist >= bsf.value:
            break
        real, pos = calculate_real_distance_leaf(ctx, leaf, bsf.value, stats)
        if real < bsf.value and bsf.update(real, pos):
            stats.bsf_updates += 1
    queue.finished = True
    return stats


def worker_next_queue(current: int, queues: list[PriorityQueue]) -> int | None:
    """Next unfinished queue scanning cyclically from ``current``; None if all are done."""
    n = len(queues)
    for step in range(n):
        q = (current + step) % n
        if not queues[q].finished:
            return q
    return None


def _search_worker(ctx, worker_id, queues, bsf, subtree_counter, barrier, stats, errors):
    try:
        n_queues = len(queues)
        cursor = [worker_id % n_queues]
        roots = ctx.index.root_nodes
        while True:
            i = next(subtree_counter)
            if i >= len(roots):
                break
            traverse_root_subtree(ctx, roots[i], queues, cursor, bsf, stats)
    except BaseException as exc:
        errors.append(exc)
        barrier.abort()
        return
    try:
        barrier.wait()
    except threading.BrokenBarrierError:
        return
    try:
        q = worker_id % n_queues
        while q is not None:
            process_queue(queues[q], ctx, bsf, stats)
            q = worker_next_queue(q, queues)
    except BaseException as exc:
        errors.append(exc)


@dataclass
class SearchResult:
    dist: float
    position: int
    stats: SearchStats
    approx_dist: float
    bsf_history: list[float]
    elapsed_ns: int

    def __iter__(self):
        # unpacks as (dist, position, stats)
        return iter((self.dist, self.position, self.stats))


def exact_search(index: Index, query, measure: Measure = ED,
                 search_config: SearchConfig | None = None) -> SearchResult:
    """Exact nearest neighbour of ``query`` under ``measure``."""
    t0 = time.perf_counter_ns()
    if len(index) == 0 or not index.root_nodes:
        raise EmptyIndexError("index is empty")
    if search_config is None:
        search_config = SearchConfig.from_index_config(index.config)
    ctx = QueryContext.build(index, query, measure)
    seed_stats = SearchStats()
    dist, pos, leaf = approximate_search(index, query, measure, ctx, seed_stats)
    bsf = SharedBsf()
    if bsf.update(dist, pos):
        seed_stats.bsf_updates += 1
    approx = bsf.value
    # the seed leaf was scanned exhaustively; no need to queue it again
    ctx.skip_leaf = leaf

    queues = [PriorityQueue() for _ in range(search_config.effective_queues)]
    n_workers = search_config.n_search_workers
    counter = itertools.count()
    barrier = threading.Barrier(n_workers)
    worker_stats = [SearchStats() for _ in range(n_workers)]
    errors: list[BaseException] = []
    args = [(ctx, i, queues, bsf, counter, barrier, worker_stats[i], errors) for i in range(n_workers)]
    if n_workers == 1:
        _search_worker(*args[0])
    else:
        threads = [threading.Thread(target=_search_worker, args=a, name=f"search-worker-{a[1]}")
                   for a in args]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    stats = seed_stats
    for s in worker_stats:
        stats.merge(s)
    return SearchResult(bsf.value, bsf.holder, stats, approx, list(bsf.history),
                        time.perf_counter_ns() - t0)
