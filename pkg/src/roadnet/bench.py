"""Benchmark harness for the spatial query engines.

Times indexed engines against their naive reference scans on synthetic
uniform points and reports one CSV row per (engine, query type): columns
engine, query_type, n_points, n_queries, wall_seconds. The engine column is
"<algorithm>:<kernel backend>" so compiled and fallback kernels can be
compared in one report. Wall seconds are the median over the requested
runs; total CPU time goes to the log, not the CSV.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time

import numpy as np

from . import _kernels
from .geo import GeoPoint
from .spatial import GridIndex, KdIndex, NaiveScan, PointSet

log = logging.getLogger(__name__)

DEFAULT_N_POINTS = 1_000_000
DEFAULT_N_QUERIES = 1_000
DEFAULT_RUNS = 5
DEFAULT_RADIUS_M = 500.0

# Synthetic extent: one degree square at mid latitude.
_LAT_RANGE = (40.0, 41.0)
_LON_RANGE = (-74.0, -73.0)

BENCH_COLUMNS = ("engine", "query_type", "n_points", "n_queries", "wall_seconds")


def _backend_names(backends: str) -> tuple[str, ...]:
    if backends == "active":
        return (_kernels.BACKEND,)
    if backends == "both":
        return _kernels.available()
    return (_kernels.get(backends).NAME,)


def run_benchmark(
    n_points: int = DEFAULT_N_POINTS,
    n_queries: int = DEFAULT_N_QUERIES,
    runs: int = DEFAULT_RUNS,
    backends: str = "active",
    seed: int = 0,
    radius_m: float = DEFAULT_RADIUS_M,
) -> list[dict]:
    """Time radius and nearest-neighbor workloads; one dict per CSV row."""
    if n_points < 1 or n_queries < 1 or runs < 1:
        raise ValueError("n_points, n_queries, and runs must all be >= 1")
    rng = np.random.default_rng(seed)
    points = PointSet.from_coords(
        np.arange(n_points, dtype=np.int64),
        rng.uniform(*_LAT_RANGE, n_points),
        rng.uniform(*_LON_RANGE, n_points),
    )
    queries = [
        GeoPoint(lat, lon)
        for lat, lon in zip(
            rng.uniform(*_LAT_RANGE, n_queries), rng.uniform(*_LON_RANGE, n_queries)
        )
    ]
    rows = []
    for backend in _backend_names(backends):
        kernels = _kernels.get(backend)
        grid = GridIndex(points, kernels=kernels)
        kd = KdIndex(points, kernels=kernels)
        naive = NaiveScan(points, kernels=kernels)
        workloads = [
            ("grid", "radius", lambda q: grid.query_radius(q, radius_m)),
            ("naive_scan", "radius", lambda q: naive.query_radius(q, radius_m)),
            ("kdtree", "nearest", kd.query_nearest),
            ("linear_scan", "nearest", naive.query_nearest),
        ]
        for algo, query_type, fn in workloads:
            wall_times = []
            cpu_total = 0.0
            for _ in range(runs):
                t0, c0 = time.perf_counter(), time.process_time()
                for q in queries:
                    fn(q)
                wall_times.append(time.perf_counter() - t0)
                cpu_total += time.process_time() - c0
            engine = f"{algo}:{backend}"
            log.info("bench %s %s: wall median %.4fs, cpu total %.4fs",
                     engine, query_type, statistics.median(wall_times), cpu_total)
            rows.append(
                {
                    "engine": engine,
                    "query_type": query_type,
                    "n_points": n_points,
                    "n_queries": n_queries,
                    "wall_seconds": statistics.median(wall_times),
                }
            )
    return rows


def rows_to_csv(rows: list[dict]) -> bytes:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")
