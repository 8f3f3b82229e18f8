"""Road graph construction: intersection detection, way splitting, cleaning.

A way becomes one or more split edges, each running between two
intersection vertices with no intersections in its interior. Cleaning
snaps near-coincident endpoints together, drops exact duplicate edges, and
prunes short disconnected fragments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .geo import BBox, GeoPoint, polyline_length
from .osmxml import RawNode, RawWay, RoadClass, road_class_of

DEFAULT_SNAP_RADIUS_M = 5.0
DEFAULT_COMPONENT_MIN_LENGTH_M = 100.0


class InvariantError(RuntimeError):
    """A RoadGraph structural invariant does not hold."""


@dataclass(frozen=True)
class Vertex:
    id: int
    location: GeoPoint
    degree: int


@dataclass(frozen=True)
class SplitEdge:
    id: int
    from_vertex: int
    to_vertex: int
    geometry: tuple[GeoPoint, ...]
    length_m: float
    road_class: RoadClass
    oneway: bool
    lanes: int
    source_way: int
    # Parsed from the way's maxspeed tag when present. Carried in memory for
    # the simulator export only; the canonical serialization does not
    # include it.
    maxspeed_kmh: float | None = None


@dataclass
class RoadGraph:
    vertices: dict[int, Vertex] = field(default_factory=dict)
    edges: dict[int, SplitEdge] = field(default_factory=dict)
    adjacency: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def total_length_m(self) -> float:
        return sum(e.length_m for e in sorted(self.edges.values(), key=lambda e: e.id))

    def bounds(self) -> BBox:
        if not self.vertices:
            raise ValueError("empty graph has no bounds")
        lats = [v.location.lat for v in self.vertices.values()]
        lons = [v.location.lon for v in self.vertices.values()]
        return BBox(min(lats), min(lons), max(lats), max(lons))

    def validate(self) -> None:
        """Raise InvariantError if any structural invariant is violated."""
        seen_keys = set()
        incident: dict[int, set[int]] = {vid: set() for vid in self.vertices}
        for e in self.edges.values():
            if e.from_vertex not in self.vertices or e.to_vertex not in self.vertices:
                raise InvariantError(f"edge {e.id} references a missing vertex")
            if len(e.geometry) < 2:
                raise InvariantError(f"edge {e.id} geometry has fewer than 2 points")
            if e.geometry[0] != self.vertices[e.from_vertex].location:
                raise InvariantError(f"edge {e.id} geometry start != from-vertex location")
            if e.geometry[-1] != self.vertices[e.to_vertex].location:
                raise InvariantError(f"edge {e.id} geometry end != to-vertex location")
            ref = polyline_length(e.geometry)
            if abs(e.length_m - ref) > 1e-9 * max(1.0, ref):
                raise InvariantError(f"edge {e.id} stored length disagrees with geometry")
            key = (e.from_vertex, e.to_vertex, e.geometry)
            if key in seen_keys:
                raise InvariantError(f"duplicate edge (from,to,geometry) at edge {e.id}")
            seen_keys.add(key)
            incident[e.from_vertex].add(e.id)
            incident[e.to_vertex].add(e.id)
        for vid, v in self.vertices.items():
            adj = self.adjacency.get(vid, ())
            if set(adj) != incident[vid]:
                raise InvariantError(f"adjacency of vertex {vid} inconsistent with edges")
            if v.degree != len(adj):
                raise InvariantError(f"vertex {vid} stored degree != incident edge count")
            if v.degree < 1:
                raise InvariantError(f"vertex {vid} has degree 0")
        for vid in self.adjacency:
            if vid not in self.vertices:
                raise InvariantError(f"adjacency lists unknown vertex {vid}")


def _way_seq(way: RawWay) -> tuple[int, ...]:
    """Node sequence with consecutive duplicate refs collapsed; reversed for
    oneway=-1 ways so traversal direction always follows node order."""
    refs = way.node_refs
    if way.tags.get("oneway") in ("-1", "reverse"):
        refs = tuple(reversed(refs))
    seq = [refs[0]]
    for r in refs[1:]:
        if r != seq[-1]:
            seq.append(r)
    return tuple(seq)


def detect_intersections(ways: list[RawWay], nodes: dict[int, RawNode] | None = None) -> set[int]:
    """Node ids that are way endpoints, shared between ways, or repeated
    within a single way."""
    seen_in_ways: dict[int, int] = {}
    result: set[int] = set()
    for way in ways:
        seq = _way_seq(way)
        if len(seq) < 2:
            continue
        result.add(seq[0])
        result.add(seq[-1])
        counts: dict[int, int] = {}
        for ref in seq:
            counts[ref] = counts.get(ref, 0) + 1
        for ref, c in counts.items():
            if c > 1:
                result.add(ref)
            prior = seen_in_ways.get(ref, 0)
            if prior:
                result.add(ref)
            seen_in_ways[ref] = prior + 1
    return result


def _parse_lanes(tags: dict[str, str]) -> int:
    try:
        lanes = int(tags.get("lanes", ""))
    except ValueError:
        return 1
    return lanes if lanes >= 1 else 1


def _parse_maxspeed(tags: dict[str, str]) -> float | None:
    raw = tags.get("maxspeed", "").strip()
    if not raw:
        return None
    factor = 1.0
    if raw.endswith("mph"):
        raw = raw[:-3].strip()
        factor = 1.609344
    try:
        value = float(raw)
    except ValueError:
        return None
    return value * factor if value > 0 else None


def _is_oneway(tags: dict[str, str]) -> bool:
    return tags.get("oneway") in ("yes", "true", "1", "-1", "reverse")


def _loop_midpoint(seq: tuple[int, ...], nodes: dict[int, RawNode]) -> int:
    """Interior index closest (by polyline length) to half the loop length."""
    pts = [nodes[r].location for r in seq]
    total = polyline_length(pts)
    best_i, best_err = 1, float("inf")
    run = 0.0
    for i in range(1, len(seq) - 1):
        run += polyline_length(pts[i - 1 : i + 1])
        err = abs(run - total / 2.0)
        if err < best_err:
            best_i, best_err = i, err
    return best_i


def split_ways(
    ways: list[RawWay],
    intersections: set[int],
    nodes: dict[int, RawNode],
) -> list[SplitEdge]:
    """Cut each way at interior intersection nodes into split edges.

    Edge ids are assigned sequentially in input order, so a deterministic
    way order yields deterministic edge ids. A piece whose two endpoints
    are the same node (a pure loop) is split again at its length-midpoint
    node so every edge has distinct start and end.
    """
    edges: list[SplitEdge] = []
    next_id = 1
    for way in ways:
        seq = _way_seq(way)
        if len(seq) < 2:
            continue
        road_class = road_class_of(way)
        oneway = _is_oneway(way.tags)
        lanes = _parse_lanes(way.tags)
        maxspeed = _parse_maxspeed(way.tags)

        pieces: list[tuple[int, ...]] = []
        start = 0
        for i in range(1, len(seq)):
            if seq[i] in intersections or i == len(seq) - 1:
                pieces.append(seq[start : i + 1])
                start = i
        final: list[tuple[int, ...]] = []
        for piece in pieces:
            if piece[0] == piece[-1] and len(piece) > 2:
                mid = _loop_midpoint(piece, nodes)
                final.append(piece[: mid + 1])
                final.append(piece[mid:])
            else:
                final.append(piece)
        for piece in final:
            geometry = tuple(nodes[r].location for r in piece)
            edges.append(
                SplitEdge(
                    id=next_id,
                    from_vertex=piece[0],
                    to_vertex=piece[-1],
                    geometry=geometry,
                    length_m=polyline_length(geometry),
                    road_class=road_class,
                    oneway=oneway,
                    lanes=lanes,
                    source_way=way.id,
                    maxspeed_kmh=maxspeed,
                )
            )
            next_id += 1
    return edges


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def add(self, x: int):
        self.parent.setdefault(x, x)

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id wins as the representative
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _snap_clusters(locations: dict[int, GeoPoint], snap_radius: float) -> dict[int, int]:
    """Map each vertex id to the smallest id within its snap cluster.

    Clusters are the transitive closure of "within snap_radius" pairs
    (single linkage). Pair discovery goes through the grid index, which is
    correct at any latitude.
    """
    from .spatial import GridIndex, PointSet

    if not locations:
        return {}
    ids = sorted(locations)
    points = PointSet.from_coords(
        ids, [locations[i].lat for i in ids], [locations[i].lon for i in ids]
    )
    # cell size comparable to the snap radius keeps candidate lists tiny
    resolution = max(snap_radius / 111_195.0 * 2.0, 1e-6)
    index = GridIndex(points, resolution)
    uf = _UnionFind()
    for vid in ids:
        uf.add(vid)
    for vid in ids:
        for other in index.query_radius(locations[vid], snap_radius):
            uf.union(vid, int(other))
    return {vid: uf.find(vid) for vid in ids}


def clean_graph(
    edges: list[SplitEdge],
    snap_radius: float = DEFAULT_SNAP_RADIUS_M,
    component_min_length: float = DEFAULT_COMPONENT_MIN_LENGTH_M,
) -> RoadGraph:
    """Snap, dedupe, and prune split edges into a consistent RoadGraph.

    Snapping merges endpoint vertices within snap_radius into the smallest
    id of the cluster and rewrites edge geometry endpoints to the surviving
    location (edge lengths are recomputed, so each snapped endpoint can
    perturb total length by up to snap_radius). Duplicate edges (same
    endpoints and identical geometry) collapse to the smallest edge id.
    Connected components shorter than component_min_length are removed.
    """
    locations: dict[int, GeoPoint] = {}
    for e in edges:
        locations.setdefault(e.from_vertex, e.geometry[0])
        locations.setdefault(e.to_vertex, e.geometry[-1])

    remap = _snap_clusters(locations, snap_radius) if snap_radius > 0 else {}

    snapped: list[SplitEdge] = []
    for e in sorted(edges, key=lambda e: e.id):
        fv = remap.get(e.from_vertex, e.from_vertex)
        tv = remap.get(e.to_vertex, e.to_vertex)
        if fv == e.from_vertex and tv == e.to_vertex:
            snapped.append(e)
            continue
        geometry = (locations[fv],) + e.geometry[1:-1] + (locations[tv],)
        snapped.append(
            replace(e, from_vertex=fv, to_vertex=tv, geometry=geometry,
                    length_m=polyline_length(geometry))
        )

    unique: dict[tuple, SplitEdge] = {}
    for e in snapped:
        key = (e.from_vertex, e.to_vertex, e.geometry)
        if key not in unique:
            unique[key] = e
    deduped = sorted(unique.values(), key=lambda e: e.id)

    comp = _UnionFind()
    for e in deduped:
        comp.add(e.from_vertex)
        comp.add(e.to_vertex)
        comp.union(e.from_vertex, e.to_vertex)
    comp_length: dict[int, float] = {}
    for e in deduped:
        root = comp.find(e.from_vertex)
        comp_length[root] = comp_length.get(root, 0.0) + e.length_m
    kept = [e for e in deduped if comp_length[comp.find(e.from_vertex)] >= component_min_length]

    graph = RoadGraph()
    incident: dict[int, list[int]] = {}
    for e in kept:
        graph.edges[e.id] = e
        incident.setdefault(e.from_vertex, []).append(e.id)
        if e.to_vertex != e.from_vertex:
            incident.setdefault(e.to_vertex, []).append(e.id)
    for vid, eids in incident.items():
        adj = tuple(sorted(eids))
        graph.adjacency[vid] = adj
        graph.vertices[vid] = Vertex(vid, locations[vid], len(adj))
    graph.validate()
    return graph


def build_graph(
    ways: list[RawWay],
    nodes: dict[int, RawNode],
    snap_radius: float = DEFAULT_SNAP_RADIUS_M,
    component_min_length: float = DEFAULT_COMPONENT_MIN_LENGTH_M,
) -> RoadGraph:
    """Full pipeline: detect intersections, split, clean."""
    intersections = detect_intersections(ways)
    edges = split_ways(ways, intersections, nodes)
    return clean_graph(edges, snap_radius, component_min_length)
