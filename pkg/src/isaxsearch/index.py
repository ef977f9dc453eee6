"""The iSAX tree and its two-phase parallel construction.

Index workers first summarize chunks of the raw data into per-worker
buffer parts, keyed by root child. After a barrier, each worker claims
whole root subtrees and inserts every buffered entry of that subtree.
Two shared counters are the only points where workers contend.
"""

from __future__ import annotations

import itertools
import threading
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import IndexConfig, SaxWord, region_tables
from .summarize import summarize_block

__all__ = [
    "IndexNode",
    "SaxBufferPart",
    "Index",
    "BuildState",
    "BuildStats",
    "ValidationReport",
    "UnsplittableLeafError",
    "build_index",
    "summarization_phase",
    "tree_construction_phase",
    "insert_entry",
    "insert_entries",
    "split_leaf",
    "validate_index",
]

_TABLE_MAX_W = 20


class UnsplittableLeafError(Exception):
    """Every segment of the leaf is already at maximum cardinality."""


class IndexNode:
    """A node of the iSAX tree.

    Leaves hold parallel arrays ``words`` (full-cardinality symbols, one
    row per entry) and ``positions`` (row indices into the raw data).
    Inner nodes hold two children that refine ``split_segment`` by one bit.
    """

    __slots__ = ("word", "depth", "children", "split_segment", "words", "positions",
                 "node_id", "size")

    def __init__(self, word: SaxWord, depth: int = 0):
        self.word = word
        self.depth = depth
        self.children: tuple[IndexNode, IndexNode] | None = None
        self.split_segment = -1
        self.words = np.empty((0, word.w), dtype=np.uint8)
        self.positions = np.empty(0, dtype=np.int64)
        self.node_id = -1
        self.size = 0

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def kind(self) -> str:
        if self.is_leaf:
            return "leaf"
        return "root-child" if self.depth == 0 else "inner"

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def splittable(self) -> bool:
        return bool(np.any(self.word.card_bits < self.word.max_card_bits))

    @property
    def entries(self):
        m = self.word.max_card_bits
        return [(SaxWord.full(wd, m), int(p)) for wd, p in zip(self.words, self.positions)]

    def leaves(self):
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend(reversed(node.children))

    def _append(self, words: np.ndarray, positions: np.ndarray):
        if self.count == 0:
            self.words = np.ascontiguousarray(words, dtype=np.uint8)
            self.positions = np.ascontiguousarray(positions, dtype=np.int64)
        else:
            self.words = np.concatenate((self.words, words))
            self.positions = np.concatenate((self.positions, positions))

    def __repr__(self):
        return f"IndexNode({self.kind}, {self.word!r}, count={self.count if self.is_leaf else self.size})"


def _child_bits(words: np.ndarray, segment: int, card_bits: int, max_bits: int) -> np.ndarray:
    """Bit that refines ``segment`` from ``card_bits`` to ``card_bits + 1``."""
    return (words[:, segment] >> (max_bits - card_bits - 1)) & 1


def split_leaf(leaf: IndexNode, config: IndexConfig) -> IndexNode:
    """Turn ``leaf`` into an inner node with two leaf children.

    The split segment is the splittable one whose extra bit divides the
    leaf's entries most evenly; ties go to the lowest segment index.
    """
    word = leaf.word
    max_bits = word.max_card_bits
    candidates = np.flatnonzero(word.card_bits < max_bits)
    if candidates.size == 0:
        raise UnsplittableLeafError(repr(word))
    m = leaf.count
    shifts = (max_bits - word.card_bits[candidates].astype(np.int64) - 1)
    ones = ((leaf.words[:, candidates] >> shifts.astype(np.uint8)) & 1).sum(axis=0, dtype=np.int64)
    imbalance = np.abs(m - 2 * ones)
    seg = int(candidates[int(np.argmin(imbalance))])
    b = int(word.card_bits[seg])

    card = word.card_bits.copy()
    card[seg] = b + 1
    children = []
    for bit in (0, 1):
        sym = word.symbols.copy()
        sym[seg] = sym[seg] | np.uint8(bit << (max_bits - b - 1))
        children.append(IndexNode(SaxWord(sym, card.copy(), max_bits), leaf.depth + 1))
    side = _child_bits(leaf.words, seg, b, max_bits).astype(bool)
    for child, mask in zip(children, (~side, side)):
        child._append(leaf.words[mask], leaf.positions[mask])

    leaf.split_segment = seg
    leaf.children = tuple(children)
    leaf.words = np.empty((0, word.w), dtype=np.uint8)
    leaf.positions = np.empty(0, dtype=np.int64)
    return leaf


def insert_entries(node: IndexNode, words: np.ndarray, positions: np.ndarray,
                   config: IndexConfig) -> None:
    """Insert entries in order, exactly as repeated `insert_entry` would.

    A full leaf is split only when one more entry reaches it; the rest of
    the batch is then routed through the new children. Insertions below
    different children never interact, so routing a batch as a block gives
    the same tree as entry-by-entry insertion.
    """
    cap = config.leaf_capacity
    max_bits = node.word.max_card_bits
    stack = [(node, words, positions)]
    while stack:
        nd, wds, pos = stack.pop()
        if not pos.shape[0]:
            continue
        nd.size += pos.shape[0]
        if nd.is_leaf:
            room = cap - nd.count
            if pos.shape[0] <= room or not nd.splittable:
                nd._append(wds, pos)
                continue
            if room > 0:
                nd._append(wds[:room], pos[:room])
                nd.size -= pos.shape[0] - room
                wds, pos = wds[room:], pos[room:]
            else:
                nd.size -= pos.shape[0]
            split_leaf(nd, config)
            stack.append((nd, wds, pos))
            continue
        seg = nd.split_segment
        bits = _child_bits(wds, seg, int(nd.word.card_bits[seg]), max_bits).astype(bool)
        # push right first so the left block is handled first
        stack.append((nd.children[1], wds[bits], pos[bits]))
        stack.append((nd.children[0], wds[~bits], pos[~bits]))


def insert_entry(subtree_root: IndexNode, entry, config: IndexConfig) -> IndexNode:
    """Insert one ``(SaxWord, position)`` pair; returns the leaf that received it."""
    word, position = entry
    symbols = np.asarray(word.symbols if isinstance(word, SaxWord) else word, dtype=np.uint8)
    insert_entries(subtree_root, symbols.reshape(1, -1), np.array([position], dtype=np.int64), config)
    return _descend(subtree_root, symbols)


def _descend(node: IndexNode, symbols: np.ndarray) -> IndexNode:
    max_bits = node.word.max_card_bits
    while not node.is_leaf:
        seg = node.split_segment
        b = int(node.word.card_bits[seg])
        node = node.children[(int(symbols[seg]) >> (max_bits - b - 1)) & 1]
    return node


class SaxBufferPart:
    """Append-only (word, position) storage written by a single worker.

    Capacity starts small and doubles when exhausted.
    """

    __slots__ = ("words", "positions", "size")

    def __init__(self, w: int, capacity: int):
        self.words = np.empty((capacity, w), dtype=np.uint8)
        self.positions = np.empty(capacity, dtype=np.int64)
        self.size = 0

    @property
    def capacity(self) -> int:
        return self.positions.shape[0]

    def extend(self, words: np.ndarray, positions: np.ndarray):
        need = self.size + positions.shape[0]
        if need > self.capacity:
            cap = self.capacity
            while cap < need:
                cap *= 2
            grown_w = np.empty((cap, self.words.shape[1]), dtype=np.uint8)
            grown_p = np.empty(cap, dtype=np.int64)
            grown_w[: self.size] = self.words[: self.size]
            grown_p[: self.size] = self.positions[: self.size]
            self.words, self.positions = grown_w, grown_p
        self.words[self.size:need] = words
        self.positions[self.size:need] = positions
        self.size = need

    def view(self):
        return self.words[: self.size], self.positions[: self.size]


@dataclass
class BuildStats:
    n_series: int = 0
    n_index_workers: int = 0
    chunk_size: int = 0
    leaf_capacity: int = 0
    n_root_children: int = 0
    n_inner: int = 0
    n_leaves: int = 0
    n_overflow_leaves: int = 0
    max_depth: int = 0
    chunks_per_worker: list = field(default_factory=list)
    subtrees_per_worker: list = field(default_factory=list)
    summarize_ns: int = 0
    tree_ns: int = 0
    total_ns: int = 0

    def to_line(self) -> str:
        fields = dict(self.__dict__)
        fields["chunks_per_worker"] = ",".join(map(str, self.chunks_per_worker))
        fields["subtrees_per_worker"] = ",".join(map(str, self.subtrees_per_worker))
        return "build " + " ".join(f"{k}={v}" for k, v in fields.items())


class Index:
    """Built iSAX index over an in-memory float32 dataset.

    Immutable once `build_index` returns; safe for concurrent readers.
    """

    def __init__(self, raw: np.ndarray, config: IndexConfig):
        self.raw = raw
        self.config = config
        size = 1 << config.w
        self.roots: list | dict = [None] * size if config.w <= _TABLE_MAX_W else {}
        self.root_keys = np.empty(0, dtype=np.int64)
        self.root_nodes: list[IndexNode] = []
        self.nodes: list[IndexNode] = []
        self.node_lo = np.empty((0, config.w))
        self.node_hi = np.empty((0, config.w))
        self.stats = BuildStats()

    def __len__(self) -> int:
        return self.raw.shape[0]

    def root_child(self, key: int) -> IndexNode | None:
        if isinstance(self.roots, dict):
            return self.roots.get(key)
        return self.roots[key]

    def _set_root_child(self, key: int, node: IndexNode):
        self.roots[key] = node

    def leaves(self):
        for root in self.root_nodes:
            yield from root.leaves()

    def leaf_assignment(self) -> dict[int, SaxWord]:
        """Map each dataset position to the word of the leaf holding it."""
        out = {}
        for leaf in self.leaves():
            for p in leaf.positions:
                out[int(p)] = leaf.word
        return out

    def finalize(self):
        """Number the nodes and tabulate their value intervals for fast lower bounds."""
        if isinstance(self.roots, dict):
            keys = sorted(self.roots)
        else:
            keys = [k for k, node in enumerate(self.roots) if node is not None]
        self.root_keys = np.array(keys, dtype=np.int64)
        self.root_nodes = [self.root_child(k) for k in keys]
        nodes = []
        for root in self.root_nodes:
            for node in root.walk():
                node.node_id = len(nodes)
                nodes.append(node)
        self.nodes = nodes
        w = self.config.w
        prefixes = np.empty((len(nodes), w), dtype=np.int64)
        bits = np.empty((len(nodes), w), dtype=np.int64)
        for i, node in enumerate(nodes):
            prefixes[i] = node.word.prefixes()
            bits[i] = node.word.card_bits
        lo = np.empty(prefixes.shape)
        hi = np.empty(prefixes.shape)
        for b in np.unique(bits) if len(nodes) else []:
            lo_tab, hi_tab = region_tables(int(b))
            mask = bits == b
            lo[mask] = lo_tab[prefixes[mask]]
            hi[mask] = hi_tab[prefixes[mask]]
        self.node_lo, self.node_hi = lo, hi


def _root_word(key: int, config: IndexConfig) -> SaxWord:
    m = config.max_card_bits
    top = [(key >> (config.w - 1 - i)) & 1 for i in range(config.w)]
    symbols = np.array([t << (m - 1) for t in top], dtype=np.uint8)
    return SaxWord(symbols, np.ones(config.w, dtype=np.uint8), m)


class BuildState:
    """Shared state of one build: raw data, buffers, counters, barrier."""

    def __init__(self, raw: np.ndarray, config: IndexConfig, n_workers: int):
        self.raw = raw
        self.config = config
        self.n_workers = n_workers
        # parts[worker][root key]; a part is allocated on its first entry
        self.parts: list[dict[int, SaxBufferPart]] = [dict() for _ in range(n_workers)]
        self.chunk_counter = itertools.count()
        self.subtree_counter = itertools.count()
        self.keys: list[int] = []
        self.chunks_done = [0] * n_workers
        self.subtrees_done = [0] * n_workers
        self.barrier = threading.Barrier(n_workers, action=self._collect_keys)
        self.t_barrier = 0

    def _collect_keys(self):
        keys = set()
        for part in self.parts:
            keys.update(part)
        self.keys = sorted(keys)
        self.t_barrier = time.perf_counter_ns()


def summarization_phase(state: BuildState, worker_id: int) -> None:
    """Claim chunks from the shared counter and buffer their iSAX words.

    ``next()`` on an ``itertools.count`` is a single atomic step under the
    interpreter lock, which gives fetch-and-increment semantics.
    """
    raw, config = state.raw, state.config
    count = raw.shape[0]
    parts = state.parts[worker_id]
    while True:
        start = next(state.chunk_counter) * config.chunk_size
        if start >= count:
            break
        stop = min(start + config.chunk_size, count)
        words, keys = summarize_block(raw, start, stop, config)
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        uniq, first = np.unique(sorted_keys, return_index=True)
        bounds = np.append(first, sorted_keys.shape[0])
        positions = np.arange(start, stop, dtype=np.int64)
        for key, lo, hi in zip(uniq.tolist(), bounds[:-1], bounds[1:]):
            sel = order[lo:hi]
            part = parts.get(key)
            if part is None:
                part = parts[key] = SaxBufferPart(config.w, config.initial_buffer_part_size)
            part.extend(words[sel], positions[sel])
        state.chunks_done[worker_id] += 1


def tree_construction_phase(state: BuildState, index: Index, worker_id: int) -> None:
    """Claim root keys from the second counter and build each subtree alone.

    Parts of a key are drained in dataset-position order. Each part is
    already ascending (chunks are claimed in increasing order), so the
    merged order, and with it the tree shape, does not depend on which
    worker summarized which chunk.
    """
    config = state.config
    keys = state.keys
    while True:
        i = next(state.subtree_counter)
        if i >= len(keys):
            break
        key = keys[i]
        blocks = [p[key].view() for p in state.parts if key in p]
        if len(blocks) == 1:
            words, positions = blocks[0]
        else:
            words = np.concatenate([b[0] for b in blocks])
            positions = np.concatenate([b[1] for b in blocks])
            order = np.argsort(positions, kind="stable")
            words, positions = words[order], positions[order]
        root = IndexNode(_root_word(key, config), 0)
        insert_entries(root, words, positions, config)
        index._set_root_child(key, root)
        state.subtrees_done[worker_id] += 1


def _index_worker(state: BuildState, index: Index, worker_id: int, errors: list):
    try:
        summarization_phase(state, worker_id)
    except BaseException as exc:  # keep the other workers from waiting forever
        errors.append(exc)
        state.barrier.abort()
        return
    try:
        state.barrier.wait()
    except threading.BrokenBarrierError:
        return
    try:
        tree_construction_phase(state, index, worker_id)
    except BaseException as exc:
        errors.append(exc)


def build_index(dataset, config: IndexConfig | None = None) -> Index:
    """Build the index with ``config.n_index_workers`` worker threads."""
    raw = np.ascontiguousarray(dataset, dtype=np.float32)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (count, length) array")
    if config is None:
        config = IndexConfig(n=raw.shape[1])
    if raw.shape[1] != config.n:
        raise ValueError(f"series length {raw.shape[1]} does not match config.n={config.n}")
    if not np.isfinite(raw).all():
        raise ValueError("dataset contains non-finite values")

    t0 = time.perf_counter_ns()
    n_workers = config.n_index_workers
    state = BuildState(raw, config, n_workers)
    index = Index(raw, config)
    errors: list[BaseException] = []
    if n_workers == 1:
        _index_worker(state, index, 0, errors)
    else:
        threads = [threading.Thread(target=_index_worker, args=(state, index, i, errors),
                                    name=f"index-worker-{i}") for i in range(n_workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    t1 = time.perf_counter_ns()
    index.finalize()

    st = index.stats
    st.n_series = raw.shape[0]
    st.n_index_workers = n_workers
    st.chunk_size = config.chunk_size
    st.leaf_capacity = config.leaf_capacity
    st.n_root_children = len(index.root_nodes)
    for node in index.nodes:
        if node.is_leaf:
            st.n_leaves += 1
            if node.count > config.leaf_capacity:
                st.n_overflow_leaves += 1
        else:
            st.n_inner += 1
        st.max_depth = max(st.max_depth, node.depth)
    st.chunks_per_worker = list(state.chunks_done)
    st.subtrees_per_worker = list(state.subtrees_done)
    st.summarize_ns = state.t_barrier - t0
    st.tree_ns = t1 - state.t_barrier
    st.total_ns = time.perf_counter_ns() - t0
    return index


@dataclass
class ValidationReport:
    violations: list[str]
    n_series: int
    total_entries: int
    n_root_children: int
    n_inner: int
    n_leaves: int
    n_overflow_leaves: int
    max_depth: int
    leaf_fill_histogram: dict[str, int]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        hist = ",".join(f"{k}:{v}" for k, v in self.leaf_fill_histogram.items())
        return (f"violations={len(self.violations)} n_series={self.n_series} "
                f"total_entries={self.total_entries} root_children={self.n_root_children} "
                f"inner={self.n_inner} leaves={self.n_leaves} overflow_leaves={self.n_overflow_leaves} "
                f"max_depth={self.max_depth} leaf_fill={hist}")


def _prefix_ok(words: np.ndarray, word: SaxWord) -> np.ndarray:
    shift = (word.max_card_bits - word.card_bits).astype(np.uint8)
    return np.all((words >> shift) == (word.symbols >> shift), axis=1)


def validate_index(index: Index, max_listed: int = 50) -> ValidationReport:
    """Check every structural invariant of a built index."""
    config = index.config
    cap = config.leaf_capacity
    m = config.max_card_bits
    violations: list[str] = []

    def report(msg):
        if len(violations) < max_listed:
            violations.append(msg)
        elif len(violations) == max_listed:
            violations.append("... further violations suppressed")

    n_inner = n_leaves = n_overflow = max_depth = total = 0
    fill = Counter()
    seen = np.zeros(len(index), dtype=np.int64)
    expected_words, expected_keys = summarize_block(index.raw, 0, len(index), config)
    present = set(index.root_keys.tolist())

    for key, root in zip(index.root_keys.tolist(), index.root_nodes):
        if root.word != _root_word(key, config):
            report(f"root child {key}: word {root.word!r} does not encode its key")
        stack = [root]
        while stack:
            node = stack.pop()
            max_depth = max(max_depth, node.depth)
            if node.is_leaf:
                n_leaves += 1
                c = node.count
                total += c
                if c > cap:
                    if node.splittable:
                        report(f"leaf {node.word!r} holds {c} > {cap} entries but is splittable")
                    n_overflow += 1
                    fill["overflow"] += 1
                else:
                    fill[f"{min(9, 10 * c // cap) * 10}%"] += 1
                if node.words.shape != (c, config.w):
                    report(f"leaf {node.word!r}: words/positions shape mismatch")
                    continue
                bad = ~_prefix_ok(node.words, node.word)
                for p in node.positions[bad][:3]:
                    report(f"position {int(p)}: entry word outside leaf {node.word!r}")
                pos = node.positions
                if pos.size and (pos.min() < 0 or pos.max() >= len(index)):
                    report(f"leaf {node.word!r}: position out of range")
                    continue
                np.add.at(seen, pos, 1)
                stale = np.any(node.words != expected_words[pos], axis=1)
                for p in pos[stale][:3]:
                    report(f"position {int(p)}: stored word differs from its raw series")
                continue
            n_inner += 1
            seg = node.split_segment
            kids = node.children
            if kids is None or len(kids) != 2 or not 0 <= seg < config.w:
                report(f"inner {node.word!r}: malformed children or split segment")
                continue
            b = int(node.word.card_bits[seg])
            for bit, child in enumerate(kids):
                exp_bits = node.word.card_bits.copy()
                exp_bits[seg] = b + 1
                exp_sym = node.word.symbols.copy()
                exp_sym[seg] |= np.uint8(bit << (m - b - 1))
                if child.word != SaxWord(exp_sym, exp_bits, m):
                    report(f"inner {node.word!r}: child {bit} word {child.word!r} is not a one-bit refinement")
                if child.depth != node.depth + 1:
                    report(f"inner {node.word!r}: child depth {child.depth}")
                stack.append(child)

    missing = np.flatnonzero(seen == 0)
    dup = np.flatnonzero(seen > 1)
    for p in missing[:3]:
        report(f"position {int(p)} is not in any leaf")
    for p in dup[:3]:
        report(f"position {int(p)} appears in {int(seen[p])} leaves")
    if len(missing) > 3 or len(dup) > 3:
        report(f"{len(missing)} positions missing, {len(dup)} duplicated in total")
    needed = set(np.unique(expected_keys).tolist())
    if needed != present:
        report(f"root children mismatch: {len(needed - present)} missing, {len(present - needed)} spurious")

    return ValidationReport(violations, len(index), total, len(index.root_nodes), n_inner,
                            n_leaves, n_overflow, max_depth, dict(sorted(fill.items())))
