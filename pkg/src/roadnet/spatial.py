"""Spatial query layer: uniform grid, unit-sphere k-d tree, naive scans.

All distance predicates are evaluated in squared-chord space on the unit
sphere. Chord distance is strictly monotone in great-circle distance, so
radius filtering, nearest-neighbor selection, and result ordering agree
exactly with the haversine metric while staying in plain Cartesian
arithmetic. The indexed engines and the naive reference engines share the
same squared-chord computations, which makes their results comparable with
float equality, not just tolerance.

Ties in distance always resolve to the smaller vertex id. Point sets are
stored id-sorted, so "smaller array position" implements that rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geo import EARTH_RADIUS_M, BBox, GeoPoint

DEFAULT_GRID_RESOLUTION_DEG = 0.01
DEFAULT_LEAF_SIZE = 16

_METERS_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class PointSet:
    """Immutable id-sorted coordinate arrays plus their sphere embedding."""

    ids: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray

    @classmethod
    def from_coords(cls, ids, lats, lons) -> "PointSet":
        ids = np.asarray(ids, dtype=np.int64)
        lats = np.asarray(lats, dtype=np.float64)
        lons = np.asarray(lons, dtype=np.float64)
        if not (len(ids) == len(lats) == len(lons)):
            raise ValueError("ids, lats, lons must have equal length")
        order = np.argsort(ids, kind="stable")
        ids, lats, lons = ids[order], lats[order], lons[order]
        if len(ids) > 1 and np.any(ids[1:] == ids[:-1]):
            raise ValueError("duplicate point ids")
        if len(lats) and (lats.min() < -90.0 or lats.max() > 90.0):
            raise ValueError("latitude outside [-90, 90]")
        if len(lons) and (lons.min() < -180.0 or lons.max() >= 180.0):
            raise ValueError("longitude outside [-180, 180)")
        phi = np.radians(lats)
        lam = np.radians(lons)
        cphi = np.cos(phi)
        return cls(
            ids=np.ascontiguousarray(ids),
            lats=np.ascontiguousarray(lats),
            lons=np.ascontiguousarray(lons),
            xs=np.ascontiguousarray(cphi * np.cos(lam)),
            ys=np.ascontiguousarray(cphi * np.sin(lam)),
            zs=np.ascontiguousarray(np.sin(phi)),
        )

    @classmethod
    def from_graph(cls, graph) -> "PointSet":
        vids = sorted(graph.vertices)
        return cls.from_coords(
            vids,
            [graph.vertices[v].location.lat for v in vids],
            [graph.vertices[v].location.lon for v in vids],
        )

    def __len__(self) -> int:
        return len(self.ids)

    def positions_of(self, ids) -> np.ndarray:
        pos = np.searchsorted(self.ids, np.asarray(ids, dtype=np.int64))
        return pos


def embed_point(lat: float, lon: float) -> tuple[float, float, float]:
    """Unit-sphere Cartesian embedding of one lat/lon point."""
    phi = math.radians(lat)
    lam = math.radians(lon)
    cphi = math.cos(phi)
    return cphi * math.cos(lam), cphi * math.sin(lam), math.sin(phi)


def meters_to_chord2(meters: float) -> float:
    """Squared chord length subtending a great-circle arc of the given length."""
    if meters < 0:
        raise ValueError("radius must be >= 0")
    theta = meters / EARTH_RADIUS_M
    if theta >= math.pi:
        return 5.0  # larger than any chord2 (max 4): whole sphere
    c = 2.0 * math.sin(theta / 2.0)
    return c * c


def chord2_to_meters(d2: float) -> float:
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(d2) / 2.0))


def chord2_to_meters_array(d2s: np.ndarray) -> np.ndarray:
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(d2s) / 2.0))


def _lon_ranges(lon: float, dlon: float) -> list[tuple[float, float]]:
    """Longitude window split into in-domain pieces, wrapping at the antimeridian."""
    lo, hi = lon - dlon, lon + dlon
    ranges = []
    if lo < -180.0:
        ranges.append((lo + 360.0, 180.0))
        lo = -180.0
    if hi >= 180.0:
        ranges.append((-180.0, hi - 360.0))
        hi = 180.0 - 1e-12
    ranges.append((lo, hi))
    return ranges


class GridIndex:
    """Uniform lat/lon grid with CSR cell storage.

    A radius query scans only the cells overlapping the latitude-corrected
    bounding window of the query ball, then filters candidates by exact
    squared-chord distance.
    """

    def __init__(self, points: PointSet, resolution: float = DEFAULT_GRID_RESOLUTION_DEG,
                 kernels=None):
        if resolution <= 0:
            raise ValueError("resolution must be > 0")
        self.points = points
        self.resolution = float(resolution)
        self._kernels = kernels if kernels is not None else _kernels.active()
        n = len(points)
        kx = np.floor(points.lons / self.resolution).astype(np.int64)
        ky = np.floor(points.lats / self.resolution).astype(np.int64)
        order = np.lexsort((np.arange(n, dtype=np.int64), kx, ky))
        self._order = order
        skx, sky = kx[order], ky[order]
        if n:
            change = np.flatnonzero((np.diff(sky) != 0) | (np.diff(skx) != 0)) + 1
            starts = np.concatenate(([0], change))
            ends = np.concatenate((change, [n]))
            self._cells = {
                (int(skx[s]), int(sky[s])): (int(s), int(e))
                for s, e in zip(starts, ends)
            }
        else:
            self._cells = {}

    @property
    def cell_count(self) -> int:
        return len(self._cells)

    def nonempty_cells(self) -> list[tuple[int, int]]:
        return sorted(self._cells)

    def cell_members(self, kx: int, ky: int) -> np.ndarray:
        """Ids stored in one cell, ascending."""
        se = self._cells.get((kx, ky))
        if se is None:
            return np.empty(0, dtype=np.int64)
        pos = np.sort(self._order[se[0] : se[1]])
        return self.points.ids[pos]

    def cell_of(self, point: GeoPoint) -> tuple[int, int]:
        return (
            int(math.floor(point.lon / self.resolution)),
            int(math.floor(point.lat / self.resolution)),
        )

    def _candidates(self, center: GeoPoint, radius_m: float) -> np.ndarray:
        """Positions of every point in cells overlapping the query window."""
        n = len(self.points)
        dlat = math.degrees(radius_m / EARTH_RADIUS_M) * (1.0 + 1e-12) + 1e-12
        phimax = abs(center.lat) + dlat
        if phimax >= 90.0:
            return np.arange(n, dtype=np.int64)
        s = math.sin(radius_m / (2.0 * EARTH_RADIUS_M)) / math.cos(math.radians(phimax))
        s *= 1.0 + 1e-12
        if s >= 1.0:
            return np.arange(n, dtype=np.int64)
        dlon = math.degrees(2.0 * math.asin(s)) * (1.0 + 1e-12) + 1e-12
        if dlon >= 180.0:
            return np.arange(n, dtype=np.int64)
        res = self.resolution
        ky_lo = math.floor((center.lat - dlat) / res)
        ky_hi = math.floor((center.lat + dlat) / res)
        spans = []
        total_cells = 0
        for lo, hi in _lon_ranges(center.lon, dlon):
            kx_lo, kx_hi = math.floor(lo / res), math.floor(hi / res)
            spans.append((kx_lo, kx_hi))
            total_cells += (kx_hi - kx_lo + 1) * (ky_hi - ky_lo + 1)
        if total_cells >= n:  # cheaper to scan everything
            return np.arange(n, dtype=np.int64)
        chunks = []
        for ky in range(ky_lo, ky_hi + 1):
            for kx_lo, kx_hi in spans:
                for kx in range(kx_lo, kx_hi + 1):
                    se = self._cells.get((kx, ky))
                    if se is not None:
                        chunks.append(self._order[se[0] : se[1]])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def query_radius(self, center: GeoPoint, radius_m: float) -> np.ndarray:
        """Ids of all points within radius_m (closed ball), ascending."""
        if radius_m < 0:
            raise ValueError("radius must be >= 0")
        pos = self._candidates(center, radius_m)
        if len(pos) == 0:
            return np.empty(0, dtype=np.int64)
        qx, qy, qz = embed_point(center.lat, center.lon)
        p = self.points
        d2 = self._kernels.chord2_to_many(qx, qy, qz, p.xs[pos], p.ys[pos], p.zs[pos])
        keep = np.sort(pos[d2 <= meters_to_chord2(radius_m)])
        return p.ids[keep]

    def query_bbox(self, box: BBox) -> np.ndarray:
        """Ids of all points inside the closed box, ascending."""
        res = self.resolution
        ky_lo, ky_hi = math.floor(box.min_lat / res), math.floor(box.max_lat / res)
        kx_lo, kx_hi = math.floor(box.min_lon / res), math.floor(box.max_lon / res)
        chunks = []
        n = len(self.points)
        if n and (kx_hi - kx_lo + 1) * (ky_hi - ky_lo + 1) >= n:
            pos = np.arange(n, dtype=np.int64)
        else:
            for ky in range(ky_lo, ky_hi + 1):
                for kx in range(kx_lo, kx_hi + 1):
                    se = self._cells.get((kx, ky))
                    if se is not None:
                        chunks.append(self._order[se[0] : se[1]])
            if not chunks:
                return np.empty(0, dtype=np.int64)
            pos = np.concatenate(chunks)
        p = self.points
        lats, lons = p.lats[pos], p.lons[pos]
        mask = (
            (lats >= box.min_lat) & (lats <= box.max_lat)
            & (lons >= box.min_lon) & (lons <= box.max_lon)
        )
        return p.ids[np.sort(pos[mask])]


class KdIndex:
    """Median-split k-d tree in unit-sphere coordinates.

    Axes cycle x, y, z by depth. Node splits order points by (coordinate,
    position) so construction is fully deterministic; leaves hold up to
    leaf_size positions sorted ascending. Traversal prunes subtrees by the
    squared plane distance and visits the far side on exact ties so the
    smaller-id tie rule is never cut off.
    """

    def __init__(self, points: PointSet, leaf_size: int = DEFAULT_LEAF_SIZE, kernels=None):
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.points = points
        self.leaf_size = int(leaf_size)
        self._kernels = kernels if kernels is not None else _kernels.active()
        n = len(points)
        self._perm = np.empty(n, dtype=np.int64)
        dims: list[int] = []
        splits: list[float] = []
        lefts: list[int] = []
        rights: list[int] = []
        if n:
            coords = (points.xs, points.ys, points.zs)
            fill = [0]

            def build(idx: np.ndarray, depth: int) -> int:
                node = len(dims)
                dims.append(-1)
                splits.append(0.0)
                lefts.append(0)
                rights.append(0)
                if len(idx) <= self.leaf_size:
                    lo = fill[0]
                    hi = lo + len(idx)
                    self._perm[lo:hi] = np.sort(idx)
                    lefts[node], rights[node] = lo, hi
                    fill[0] = hi
                    return node
                axis = depth % 3
                vals = coords[axis][idx]
                sidx = idx[np.lexsort((idx, vals))]
                mid = len(sidx) // 2
                dims[node] = axis
                splits[node] = float(coords[axis][sidx[mid]])
                lefts[node] = build(sidx[:mid], depth + 1)
                rights[node] = build(sidx[mid:], depth + 1)
                return node

            build(np.arange(n, dtype=np.int64), 0)
        self._node_dim = np.asarray(dims, dtype=np.int64)
        self._node_split = np.asarray(splits, dtype=np.float64)
        self._node_left = np.asarray(lefts, dtype=np.int64)
        self._node_right = np.asarray(rights, dtype=np.int64)

    def query_nearest(self, q: GeoPoint) -> tuple[int, float]:
        """(id, meters) of the closest point; smaller id wins ties."""
        if len(self.points) == 0:
            raise ValueError("empty index")
        qx, qy, qz = embed_point(q.lat, q.lon)
        p = self.points
        pos, d2 = self._kernels.kd_nearest(
            self._node_dim, self._node_split, self._node_left, self._node_right,
            self._perm, p.xs, p.ys, p.zs, qx, qy, qz,
        )
        return int(p.ids[pos]), chord2_to_meters(d2)

    def query_knn(self, q: GeoPoint, k: int) -> list[tuple[int, float]]:
        """min(k, n) closest points as (id, meters), sorted by (distance, id)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        n = len(self.points)
        if n == 0:
            raise ValueError("empty index")
        k = min(k, n)
        qx, qy, qz = embed_point(q.lat, q.lon)
        p = self.points
        pos, d2s = self._kernels.kd_knn(
            self._node_dim, self._node_split, self._node_left, self._node_right,
            self._perm, p.xs, p.ys, p.zs, qx, qy, qz, k,
        )
        order = np.lexsort((pos, d2s))
        meters = chord2_to_meters_array(d2s[order])
        ids = p.ids[pos[order]]
        return [(int(i), float(m)) for i, m in zip(ids, meters)]


class NaiveScan:
    """Reference engine: every query is a full scan in squared-chord space.

    Shares the distance arithmetic with the indexed engines, so results
    match them exactly, including ties.
    """

    def __init__(self, points: PointSet, kernels=None):
        self.points = points
        self._kernels = kernels if kernels is not None else _kernels.active()

    def _d2(self, q: GeoPoint) -> np.ndarray:
        qx, qy, qz = embed_point(q.lat, q.lon)
        p = self.points
        return self._kernels.chord2_to_many(qx, qy, qz, p.xs, p.ys, p.zs)

    def query_radius(self, center: GeoPoint, radius_m: float) -> np.ndarray:
        if radius_m < 0:
            raise ValueError("radius must be >= 0")
        if len(self.points) == 0:
            return np.empty(0, dtype=np.int64)
        d2 = self._d2(center)
        return self.points.ids[d2 <= meters_to_chord2(radius_m)]

    def query_bbox(self, box: BBox) -> np.ndarray:
        p = self.points
        mask = (
            (p.lats >= box.min_lat) & (p.lats <= box.max_lat)
            & (p.lons >= box.min_lon) & (p.lons <= box.max_lon)
        )
        return p.ids[mask]

    def query_nearest(self, q: GeoPoint) -> tuple[int, float]:
        if len(self.points) == 0:
            raise ValueError("empty index")
        d2 = self._d2(q)
        m = d2.min()
        pos = int(np.flatnonzero(d2 == m)[0])
        return int(self.points.ids[pos]), chord2_to_meters(float(m))

    def query_knn(self, q: GeoPoint, k: int) -> list[tuple[int, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        n = len(self.points)
        if n == 0:
            raise ValueError("empty index")
        d2 = self._d2(q)
        order = np.lexsort((np.arange(n, dtype=np.int64), d2))[: min(k, n)]
        meters = chord2_to_meters_array(d2[order])
        ids = self.points.ids[order]
        return [(int(i), float(m)) for i, m in zip(ids, meters)]


def build_grid(graph, resolution: float = DEFAULT_GRID_RESOLUTION_DEG) -> GridIndex:
    """GridIndex over a graph's vertices."""
    return GridIndex(PointSet.from_graph(graph), resolution)


def build_kd(graph, leaf_size: int = DEFAULT_LEAF_SIZE) -> KdIndex:
    """KdIndex over a graph's vertices."""
    return KdIndex(PointSet.from_graph(graph), leaf_size)
