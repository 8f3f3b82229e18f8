"""City-boundary detection from road density.

Pipeline: rasterize vertex density over a lat/lon grid, threshold and
label 8-connected dense cells, trace each cluster's outline into a polygon,
and compare polygons against administrative boundaries by rasterized IoU.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .analytics import KdeEstimator, KdeParams
from .geo import EARTH_RADIUS_M, BBox, GeoPoint
from .spatial import GridIndex, PointSet

DEFAULT_BOUNDARY_RESOLUTION_DEG = 0.01

# Directions in (d_row, d_col) lattice steps; row grows with latitude.
_EAST, _NORTH, _WEST, _SOUTH = (0, 1), (1, 0), (0, -1), (-1, 0)


@dataclass(frozen=True)
class DensityRaster:
    resolution: float
    origin_lat: float
    origin_lon: float
    cells: np.ndarray  # (rows, cols), row 0 at origin_lat

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_lat + (row + 0.5) * self.resolution,
            self.origin_lon + (col + 0.5) * self.resolution,
        )


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray  # int64, 0 = background
    members: dict[int, list[tuple[int, int]]]  # cluster id -> row-major cells

    @property
    def cluster_count(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class BoundaryPolygon:
    cluster_id: int
    exterior: tuple[GeoPoint, ...]  # closed ring, counter-clockwise
    area_km2: float
    cell_count: int


def _cell_span(lo: float, hi: float, resolution: float) -> int:
    return max(1, int(math.ceil((hi - lo) / resolution - 1e-9)))


def rasterize(
    graph,
    extent: BBox,
    resolution: float = DEFAULT_BOUNDARY_RESOLUTION_DEG,
    mode: str = "counts",
    kde_params: KdeParams | None = None,
) -> DensityRaster:
    """Per-cell vertex counts, or KDE density evaluated at cell centers.

    Vertices exactly on the extent's max edges fold into the last row or
    column, so counts over a closed extent are conserved.
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    if mode not in ("counts", "kde"):
        raise ValueError(f"unknown raster mode {mode!r}")
    rows = _cell_span(extent.min_lat, extent.max_lat, resolution)
    cols = _cell_span(extent.min_lon, extent.max_lon, resolution)
    cells = np.zeros((rows, cols), dtype=np.float64)
    if mode == "counts":
        for vid in sorted(graph.vertices):
            loc = graph.vertices[vid].location
            if not (
                extent.min_lat <= loc.lat <= extent.max_lat
                and extent.min_lon <= loc.lon <= extent.max_lon
            ):
                continue
            r = min(int((loc.lat - extent.min_lat) / resolution), rows - 1)
            c = min(int((loc.lon - extent.min_lon) / resolution), cols - 1)
            cells[r, c] += 1.0
    else:
        est = KdeEstimator(GridIndex(PointSet.from_graph(graph)), kde_params)
        for r in range(rows):
            for c in range(cols):
                lat = extent.min_lat + (r + 0.5) * resolution
                lon = extent.min_lon + (c + 0.5) * resolution
                cells[r, c] = est.at(GeoPoint(lat, lon))
    return DensityRaster(resolution, extent.min_lat, extent.min_lon, cells)


def default_threshold(raster: DensityRaster) -> float:
    """90th percentile of nonzero cell values; +inf when all cells are zero."""
    nonzero = raster.cells[raster.cells > 0]
    if len(nonzero) == 0:
        return math.inf
    return float(np.percentile(nonzero, 90))


def cluster_dense_cells(raster: DensityRaster, threshold: float) -> ClusterLabeling:
    """Label 8-connected components of cells with value >= threshold.

    Cluster ids are dense from 1 in row-major discovery order.
    """
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    dense = raster.cells >= threshold
    labels = np.zeros(raster.cells.shape, dtype=np.int64)
    members: dict[int, list[tuple[int, int]]] = {}
    rows, cols = dense.shape
    next_id = 1
    for r0 in range(rows):
        for c0 in range(cols):
            if not dense[r0, c0] or labels[r0, c0]:
                continue
            cluster: list[tuple[int, int]] = []
            queue = deque([(r0, c0)])
            labels[r0, c0] = next_id
            while queue:
                r, c = queue.popleft()
                cluster.append((r, c))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if (
                            0 <= rr < rows and 0 <= cc < cols
                            and dense[rr, cc] and not labels[rr, cc]
                        ):
                            labels[rr, cc] = next_id
                            queue.append((rr, cc))
            members[next_id] = sorted(cluster)
            next_id += 1
    return ClusterLabeling(labels, members)


def _boundary_edges(cells: set[tuple[int, int]]) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Directed outline edges on the corner lattice, interior on the left."""
    out: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for r, c in sorted(cells):
        sides = (
            ((r - 1, c), (r, c), (r, c + 1)),      # bottom: east
            ((r, c + 1), (r, c + 1), (r + 1, c + 1)),  # right: north
            ((r + 1, c), (r + 1, c + 1), (r + 1, c)),  # top: west
            ((r, c - 1), (r + 1, c), (r, c)),      # left: south
        )
        for neighbor, start, end in sides:
            if neighbor not in cells:
                out.setdefault(start, []).append(end)
    return out


def _trace_rings(out_map: dict) -> list[list[tuple[int, int]]]:
    """Chain directed edges into closed rings.

    Where two rings pass through one corner (cells touching only
    diagonally), the most-clockwise continuation is taken, which crosses
    into the diagonal neighbor and keeps the whole 8-connected cluster on a
    single exterior ring. Such rings touch themselves at that corner but
    never cross.
    """
    rings = []
    while out_map:
        start = min(out_map)
        ring = [start]
        cur = start
        d_in = _SOUTH
        while True:
            prefer = (
                (-d_in[1], d_in[0]),  # clockwise turn
                d_in,
                (d_in[1], -d_in[0]),  # counter-clockwise turn
                (-d_in[0], -d_in[1]),
            )
            ends = out_map[cur]
            for d in prefer:
                nxt = (cur[0] + d[0], cur[1] + d[1])
                if nxt in ends:
                    ends.remove(nxt)
                    if not ends:
                        del out_map[cur]
                    ring.append(nxt)
                    d_in = d
                    cur = nxt
                    break
            else:
                raise RuntimeError("outline tracing dead-ends; labeling is inconsistent")
            if cur == start:
                break
        rings.append(ring)
    return rings


def _merge_collinear(ring: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop corners where the outline continues straight."""
    body = ring[:-1]
    kept = []
    n = len(body)
    for i in range(n):
        prev_pt, pt, nxt_pt = body[i - 1], body[i], body[(i + 1) % n]
        d_in = (pt[0] - prev_pt[0], pt[1] - prev_pt[1])
        d_out = (nxt_pt[0] - pt[0], nxt_pt[1] - pt[1])
        if d_in != d_out:
            kept.append(pt)
    start = min(kept)
    k = kept.index(start)
    kept = kept[k:] + kept[:k]
    return kept + [kept[0]]


def _ring_signed_area(ring: list[tuple[int, int]]) -> float:
    s = 0.0
    for i in range(len(ring) - 1):
        (r1, c1), (r2, c2) = ring[i], ring[i + 1]
        s += c1 * r2 - c2 * r1
    return s / 2.0


def polygonize(labeling: ClusterLabeling, raster: DensityRaster) -> list[BoundaryPolygon]:
    """Trace each cluster's exterior outline into a closed CCW polygon.

    Interior holes are dropped (filled), so for clusters containing holes
    the polygon area exceeds cell_count x cell area. Areas are computed on
    the equirectangular plane at the cluster's mean cell-center latitude,
    from unquantized corner coordinates.
    """
    res = raster.resolution
    polygons = []
    for cid in sorted(labeling.members):
        cells = set(labeling.members[cid])
        rings = _trace_rings(_boundary_edges(cells))
        exterior = None
        for ring in rings:
            if _ring_signed_area(ring) > 0:
                if exterior is not None:
                    raise RuntimeError(f"cluster {cid} traced to multiple exterior rings")
                exterior = ring
        if exterior is None:
            raise RuntimeError(f"cluster {cid} has no exterior ring")
        exterior = _merge_collinear(exterior)
        mean_lat = float(
            np.mean([raster.origin_lat + (r + 0.5) * res for r, _ in labeling.members[cid]])
        )
        scale_x = EARTH_RADIUS_M * math.cos(math.radians(mean_lat))
        pts = [
            (
                raster.origin_lat + r * res,
                raster.origin_lon + c * res,
            )
            for r, c in exterior
        ]
        area = 0.0
        for i in range(len(pts) - 1):
            x1 = scale_x * math.radians(pts[i][1])
            y1 = EARTH_RADIUS_M * math.radians(pts[i][0])
            x2 = scale_x * math.radians(pts[i + 1][1])
            y2 = EARTH_RADIUS_M * math.radians(pts[i + 1][0])
            area += x1 * y2 - x2 * y1
        area_km2 = abs(area) / 2.0 / 1e6
        polygons.append(
            BoundaryPolygon(
                cluster_id=cid,
                exterior=tuple(GeoPoint(lat, lon) for lat, lon in pts),
                area_km2=area_km2,
                cell_count=len(cells),
            )
        )
    return polygons


def _rings_mask(rings: list[list[tuple[float, float]]], px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Even-odd containment of (px, py) points against (lon, lat) rings."""
    inside = np.zeros(px.shape, dtype=bool)
    for ring in rings:
        xs = np.array([p[0] for p in ring])
        ys = np.array([p[1] for p in ring])
        for i in range(len(ring) - 1):
            x1, y1, x2, y2 = xs[i], ys[i], xs[i + 1], ys[i + 1]
            crosses = (y1 > py) != (y2 > py)
            if y2 != y1:
                xcross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                inside ^= crosses & (px < xcross)
    return inside


def _polygon_rings(poly: BoundaryPolygon) -> list[list[tuple[float, float]]]:
    return [[(p.lon, p.lat) for p in poly.exterior]]


def _iou_of_rings(
    rings_a: list[list[tuple[float, float]]],
    rings_b: list[list[tuple[float, float]]],
    cell_resolution: float,
) -> float:
    ax = [p[0] for ring in rings_a for p in ring]
    ay = [p[1] for ring in rings_a for p in ring]
    bx = [p[0] for ring in rings_b for p in ring]
    by = [p[1] for ring in rings_b for p in ring]
    # disjoint bounding boxes: intersection is empty, and sampling the joint
    # box would waste an arbitrarily large grid
    if min(ax) > max(bx) or max(ax) < min(bx) or min(ay) > max(by) or max(ay) < min(by):
        return 0.0
    min_x, max_x = min(min(ax), min(bx)), max(max(ax), max(bx))
    min_y, max_y = min(min(ay), min(by)), max(max(ay), max(by))
    step = cell_resolution / 8.0
    nx = _cell_span(min_x, max_x, step)
    ny = _cell_span(min_y, max_y, step)
    cx = min_x + (np.arange(nx) + 0.5) * step
    cy = min_y + (np.arange(ny) + 0.5) * step
    px, py = np.meshgrid(cx, cy)
    px, py = px.ravel(), py.ravel()
    mask_a = _rings_mask(rings_a, px, py)
    mask_b = _rings_mask(rings_b, px, py)
    union = np.count_nonzero(mask_a | mask_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(mask_a & mask_b) / union


def boundary_iou(
    a: BoundaryPolygon,
    b: BoundaryPolygon,
    cell_resolution: float = DEFAULT_BOUNDARY_RESOLUTION_DEG,
) -> float:
    """Approximate intersection-over-union on a shared fine grid.

    Both polygons are rasterized at cell_resolution / 8 over their joint
    bounding box; the IoU is the cell-count ratio.
    """
    if a.area_km2 <= 0 or b.area_km2 <= 0:
        raise ValueError("degenerate polygon")
    return _iou_of_rings(_polygon_rings(a), _polygon_rings(b), cell_resolution)


def admin_regions_from_geojson(obj: dict) -> dict[str, list[list[tuple[float, float]]]]:
    """Named regions from a GeoJSON FeatureCollection.

    Each feature needs a `name` property and a Polygon or MultiPolygon
    geometry; all rings (exterior and holes) are kept, containment being
    even-odd.
    """
    if obj.get("type") != "FeatureCollection":
        raise ValueError("expected a GeoJSON FeatureCollection")
    regions: dict[str, list[list[tuple[float, float]]]] = {}
    for feature in obj.get("features", []):
        props = feature.get("properties") or {}
        name = props.get("name")
        if name is None:
            raise ValueError("feature without a name property")
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            polys = [geom["coordinates"]]
        elif gtype == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise ValueError(f"unsupported geometry type {gtype!r} for region {name!r}")
        rings = []
        for poly in polys:
            for ring in poly:
                pts = [(float(x), float(y)) for x, y in ring]
                if pts[0] != pts[-1]:
                    pts.append(pts[0])
                rings.append(pts)
        regions[str(name)] = rings
    return regions


def compare_boundaries(
    polygons: list[BoundaryPolygon],
    admin_regions: dict[str, list[list[tuple[float, float]]]],
    cell_resolution: float = DEFAULT_BOUNDARY_RESOLUTION_DEG,
) -> list[dict]:
    """Best-overlap report per admin region, sorted by region name.

    Ties on IoU go to the smaller cluster id; a region overlapping nothing
    reports best_cluster None with IoU 0.
    """
    report = []
    for name in sorted(admin_regions):
        rings = admin_regions[name]
        best_cluster, best_iou = None, 0.0
        for poly in polygons:
            iou = _iou_of_rings(_polygon_rings(poly), rings, cell_resolution)
            if iou > best_iou:
                best_cluster, best_iou = poly.cluster_id, iou
        report.append({"region_name": name, "best_cluster": best_cluster, "iou": best_iou})
    return report


def boundaries_to_geojson(polygons: list[BoundaryPolygon]) -> dict:
    """FeatureCollection with one Feature per cluster polygon."""
    features = []
    for poly in sorted(polygons, key=lambda p: p.cluster_id):
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "cluster_id": poly.cluster_id,
                    "cell_count": poly.cell_count,
                    "area_km2": poly.area_km2,
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[p.lon, p.lat] for p in poly.exterior]],
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}
