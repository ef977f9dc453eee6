"""Command-line front end: generate, query, bench, validate.

Results go to stdout as ``key=value`` lines (or CSV for ``bench``);
diagnostics go to stderr. Exit status is 0 only if every requested check
passed.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import statistics
import sys
import time

import numpy as np

from .baseline import scan_nn
from .core import IndexConfig
from .data import DatasetFormatError, DegenerateSeriesError, generate_random_walk, load_dataset, save_dataset
from .index import build_index, validate_index
from .query import ED, Measure, SearchConfig, exact_search

log = logging.getLogger("isaxsearch")

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "schema_version", "measure", "n_series", "n_queries",
    "n_index_workers", "n_search_workers", "mode", "n_queues", "leaf_capacity", "chunk_size",
    "build_ns", "mean_query_ns", "median_query_ns",
    "lb_node_calcs", "lb_entry_calcs", "real_dist_calcs", "bsf_updates",
    "pruned_subtrees", "queue_insertions", "leaves_evaluated",
]

_MODES = {"sq": "single", "mq": "multi"}


class CliError(Exception):
    pass


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _mode_list(text: str) -> list[str]:
    modes = [m for m in text.split(",") if m]
    if not modes or any(m not in _MODES for m in modes):
        raise argparse.ArgumentTypeError(f"modes must be sq or mq, got {text!r}")
    return modes


def _add_index_flags(p, *, sweep: bool = False):
    cpus = os.cpu_count() or 1
    kind = _int_list if sweep else _positive
    wrap = (lambda v: [v]) if sweep else (lambda v: v)
    p.add_argument("--length", type=_positive, required=True, help="points per series in the files")
    p.add_argument("--segments", type=_positive, default=16, help="PAA segments (w)")
    p.add_argument("--card-bits", type=_positive, default=8, help="bits per symbol at full cardinality")
    p.add_argument("--leaf-size", type=kind, default=wrap(2000))
    p.add_argument("--chunk-size", type=kind, default=wrap(20000))
    p.add_argument("--index-workers", type=kind, default=wrap(cpus))
    p.add_argument("--buffer-part-size", type=_positive, default=5)


def _add_query_flags(p, *, sweep: bool = False):
    cpus = os.cpu_count() or 1
    p.add_argument("--measure", choices=("ed", "dtw"), default="ed")
    p.add_argument("--window-frac", type=float, default=0.1, help="DTW window as a fraction of the length")
    if sweep:
        p.add_argument("--mode", type=_mode_list, default=["mq"])
        p.add_argument("--queues", type=_int_list, default=[24])
        p.add_argument("--search-workers", type=_int_list, default=[cpus])
    else:
        p.add_argument("--mode", choices=tuple(_MODES), default="mq")
        p.add_argument("--queues", type=_positive, default=24)
        p.add_argument("--search-workers", type=_positive, default=cpus)


def _load(path, args):
    try:
        data, report = load_dataset(path, args.length, w=args.segments)
    except (OSError, DatasetFormatError) as exc:
        raise CliError(str(exc)) from exc
    if report.padded:
        log.warning("%s: padded series from %d to %d points", path, report.original_length, report.length)
    return data


def _measure(args, n: int) -> Measure:
    if args.measure == "ed":
        return ED
    if not 0.0 <= args.window_frac < 1.0:
        raise CliError(f"--window-frac must be in [0, 1), got {args.window_frac}")
    return Measure.dtw_fraction(n, args.window_frac)


def _config(args, n, **overrides) -> IndexConfig:
    values = dict(n=n, w=args.segments, max_card_bits=args.card_bits,
                  leaf_capacity=args.leaf_size, chunk_size=args.chunk_size,
                  n_index_workers=args.index_workers,
                  initial_buffer_part_size=args.buffer_part_size)
    values.update(overrides)
    try:
        return IndexConfig(**values)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_generate(args) -> int:
    try:
        data = generate_random_walk(args.count, args.length, args.seed, znorm=args.znorm,
                                    n_threads=args.threads)
    except DegenerateSeriesError as exc:
        raise CliError(str(exc)) from exc
    try:
        save_dataset(args.out, data)
    except OSError as exc:
        raise CliError(str(exc)) from exc
    print(f"generated count={args.count} length={args.length} seed={args.seed} "
          f"znorm={int(args.znorm)} bytes={os.path.getsize(args.out)} path={args.out}")
    return 0


def cmd_query(args) -> int:
    data = _load(args.data, args)
    queries = _load(args.queries, args)
    n = data.shape[1]
    measure = _measure(args, n)
    config = _config(args, n, n_search_workers=args.search_workers, n_queues=args.queues,
                     queue_mode=_MODES[args.mode])
    index = build_index(data, config)
    print(f"build_ns={index.stats.total_ns} n_series={len(index)} measure={measure}")
    if args.stats:
        print(index.stats.to_line())
    search = SearchConfig.from_index_config(config)
    mismatches = 0
    for i, q in enumerate(queries):
        res = exact_search(index, q, measure, search)
        line = f"query={i} dist={res.dist:.9g} position={res.position} time_ns={res.elapsed_ns}"
        if args.stats:
            line += " " + res.stats.to_line()
        if args.oracle_check:
            t0 = time.perf_counter_ns()
            odist, opos = scan_nn(data, q, measure, args.search_workers)
            scan_ns = time.perf_counter_ns() - t0
            ok = abs(res.dist - odist) <= 1e-6 * max(abs(odist), 1e-12)
            mismatches += not ok
            line += f" oracle_dist={odist:.9g} oracle_position={opos} scan_ns={scan_ns} " \
                    f"oracle={'MATCH' if ok else 'MISMATCH'}"
        print(line, flush=True)
    if args.oracle_check:
        print(f"oracle_summary queries={len(queries)} match={len(queries) - mismatches} mismatch={mismatches}")
    return 1 if mismatches else 0


def cmd_bench(args) -> int:
    data = _load(args.data, args)
    queries = _load(args.queries, args)
    if args.max_queries:
        queries = queries[: args.max_queries]
    n = data.shape[1]
    measure = _measure(args, n)
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for iw, leaf, chunk in itertools.product(args.index_workers, args.leaf_size, args.chunk_size):
            config = _config(args, n, leaf_capacity=leaf, chunk_size=chunk, n_index_workers=iw)
            index = build_index(data, config)
            log.info("built leaf=%d chunk=%d workers=%d in %.3fs", leaf, chunk, iw, index.stats.total_ns / 1e9)
            for sw, mode, nq in itertools.product(args.search_workers, args.mode, args.queues):
                search = SearchConfig(sw, nq, _MODES[mode])
                times, totals = [], {}
                for q in queries:
                    res = exact_search(index, q, measure, search)
                    times.append(res.elapsed_ns)
                    for k, v in res.stats.as_dict().items():
                        totals[k] = totals.get(k, 0) + v
                row = dict(schema_version=CSV_SCHEMA_VERSION, measure=str(measure),
                           n_series=len(index), n_queries=len(queries),
                           n_index_workers=iw, n_search_workers=sw, mode=mode,
                           n_queues=search.effective_queues, leaf_capacity=leaf, chunk_size=chunk,
                           build_ns=index.stats.total_ns,
                           mean_query_ns=int(statistics.fmean(times)),
                           median_query_ns=int(statistics.median(times)))
                row.update({k: totals.get(k, 0) for k in CSV_COLUMNS if k in totals})
                writer.writerow(row)
                out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_validate(args) -> int:
    data = _load(args.data, args)
    config = _config(args, data.shape[1])
    index = build_index(data, config)
    report = validate_index(index)
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    print(report.summary())
    print(f"{len(report.violations)} violations")
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isaxsearch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random-walk dataset")
    p.add_argument("--count", type=_positive, required=True)
    p.add_argument("--length", type=_positive, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--znorm", action="store_true", help="z-normalize every series")
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("query", help="build an index and answer queries in file order")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    _add_index_flags(p)
    _add_query_flags(p)
    p.add_argument("--stats", action="store_true", help="print build and per-query counters")
    p.add_argument("--oracle-check", action="store_true", help="compare every answer with a full scan")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="sweep parameters and emit one CSV row per configuration")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--max-queries", type=_positive)
    _add_index_flags(p, sweep=True)
    _add_query_flags(p, sweep=True)
    p.add_argument("--csv", help="output file (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="build an index and check its invariants")
    p.add_argument("--data", required=True)
    _add_index_flags(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
