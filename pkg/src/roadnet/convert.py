"""Downstream converters: sensor mapping, routing, simulator export, demand
generation, and canonical graph serialization.

All outputs are deterministic: collections are emitted in sorted id order,
floats in their shortest round-trip form, and coordinates in the fixed
7-decimal form that losslessly round-trips quantized values.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint
from .graphbuild import RoadGraph, SplitEdge, Vertex
from .osmxml import RoadClass
from .spatial import KdIndex

DEFAULT_MAX_MATCH_DISTANCE_M = 100.0
SIGNAL_PHASE_DURATION_S = 30

# Fallback speed limits (km/h) when the source way carried no usable
# maxspeed tag.
SPEED_KMH_BY_CLASS = {
    RoadClass.MOTORWAY: 120.0,
    RoadClass.TRUNK: 100.0,
    RoadClass.PRIMARY: 80.0,
    RoadClass.SECONDARY: 60.0,
    RoadClass.TERTIARY: 50.0,
    RoadClass.UNCLASSIFIED: 40.0,
    RoadClass.RESIDENTIAL: 40.0,
    RoadClass.SERVICE: 40.0,
    RoadClass.OTHER: 40.0,
}

GRAPH_FORMATS = ("csv", "json", "geojson")


@dataclass(frozen=True)
class PathResult:
    edge_ids: tuple[int, ...]
    length_m: float


@dataclass(frozen=True)
class SensorMapping:
    # sensor id -> (vertex id, meters), or None when nothing is close enough
    assignments: dict[str, tuple[int, float] | None]
    max_match_distance: float


def map_sensors(
    sensors: list[tuple[str, GeoPoint]],
    index: KdIndex,
    max_match_distance: float = DEFAULT_MAX_MATCH_DISTANCE_M,
) -> SensorMapping:
    """Assign each sensor to its nearest vertex, or None beyond the cutoff."""
    assignments: dict[str, tuple[int, float] | None] = {}
    empty = len(index.points) == 0
    for sid, point in sensors:
        if sid in assignments:
            raise ValueError(f"duplicate sensor id {sid!r}")
        if empty:
            assignments[sid] = None
            continue
        vid, dist = index.query_nearest(point)
        assignments[sid] = (vid, dist) if dist <= max_match_distance else None
    return SensorMapping(assignments, max_match_distance)


def sensors_from_csv(data: bytes) -> list[tuple[str, GeoPoint]]:
    """Parse sensor CSV (sensor_id, lat, lon)."""
    text = data.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["sensor_id", "lat", "lon"]:
        raise ValueError("sensor CSV must start with header sensor_id,lat,lon")
    return [(row[0], GeoPoint(float(row[1]), float(row[2]))) for row in reader if row]


def sensor_mapping_to_csv(mapping: SensorMapping) -> bytes:
    lines = ["sensor_id,vertex_id,distance_m"]
    for sid, match in mapping.assignments.items():
        if match is None:
            lines.append(f"{sid},UNMATCHED,")
        else:
            lines.append(f"{sid},{match[0]},{match[1]!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _dijkstra(adjacency: dict[int, list[tuple[int, int, float]]],
              src: int, dst: int) -> tuple[tuple[int, ...], float] | None:
    """Minimum-length path over (link id, target, length) adjacency.

    Among equal-length paths the lexicographically smallest link-id
    sequence wins: the heap orders by (distance, id sequence), and since
    extending a path never lowers either component, the first pop of a
    vertex carries its optimal label.
    """
    if src == dst:
        return (), 0.0
    heap: list[tuple[float, tuple[int, ...], int]] = [(0.0, (), src)]
    done = set()
    while heap:
        dist, path, v = heapq.heappop(heap)
        if v in done:
            continue
        if v == dst:
            return path, dist
        done.add(v)
        for link_id, target, length in adjacency.get(v, ()):
            if target not in done:
                heapq.heappush(heap, (dist + length, path + (link_id,), target))
    return None


def shortest_path(graph: RoadGraph, from_vertex: int, to_vertex: int) -> PathResult | None:
    """Minimum-total-length directed path; None when unreachable.

    Oneway edges are traversable from-to only; other edges both ways. Ties
    resolve to the lexicographically smallest edge-id sequence.
    """
    if from_vertex not in graph.vertices or to_vertex not in graph.vertices:
        raise ValueError("both endpoints must be graph vertices")
    adjacency: dict[int, list[tuple[int, int, float]]] = {}
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        adjacency.setdefault(e.from_vertex, []).append((eid, e.to_vertex, e.length_m))
        if not e.oneway:
            adjacency.setdefault(e.to_vertex, []).append((eid, e.from_vertex, e.length_m))
    found = _dijkstra(adjacency, from_vertex, to_vertex)
    if found is None:
        return None
    return PathResult(found[0], found[1])


def _edge_speed_kmh(e: SplitEdge) -> float:
    if e.maxspeed_kmh is not None:
        return e.maxspeed_kmh
    return SPEED_KMH_BY_CLASS[e.road_class]


def export_simnet(graph: RoadGraph) -> dict:
    """Lane-level simulator network (schema simnet/1) as a JSON-ready dict.

    Bidirectional edges expand into two directed roads (ids 2*edge_id and
    2*edge_id+1); oneway edges into one. Lane counts split the source lanes
    evenly with a minimum of 1 per direction. Vertices of degree >= 3 with
    at least two incoming roads get a round-robin signal phase per incoming
    road, 30 s each.
    """
    roads = []
    incoming: dict[int, list[int]] = {vid: [] for vid in graph.vertices}
    outgoing: dict[int, list[int]] = {vid: [] for vid in graph.vertices}
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        lanes = max(1, e.lanes if e.oneway else e.lanes // 2)
        speed = _edge_speed_kmh(e)
        fwd = {
            "id": 2 * eid,
            "edge_id": eid,
            "direction": "fwd",
            "from": e.from_vertex,
            "to": e.to_vertex,
            "lanes": lanes,
            "length_m": e.length_m,
            "speed_kmh": speed,
            "class": e.road_class.value,
        }
        roads.append(fwd)
        outgoing[e.from_vertex].append(fwd["id"])
        incoming[e.to_vertex].append(fwd["id"])
        if not e.oneway:
            rev = dict(fwd, id=2 * eid + 1, direction="rev",
                       **{"from": e.to_vertex, "to": e.from_vertex})
            roads.append(rev)
            outgoing[e.to_vertex].append(rev["id"])
            incoming[e.from_vertex].append(rev["id"])
    intersections = []
    for vid in sorted(graph.vertices):
        v = graph.vertices[vid]
        inc = sorted(incoming[vid])
        out = sorted(outgoing[vid])
        phases = []
        if v.degree >= 3 and len(inc) >= 2:
            phases = [
                {"id": i, "incoming_road": rid, "duration_s": SIGNAL_PHASE_DURATION_S}
                for i, rid in enumerate(inc)
            ]
        intersections.append(
            {
                "id": vid,
                "lat": v.location.lat,
                "lon": v.location.lon,
                "incoming": inc,
                "outgoing": out,
                "phases": phases,
            }
        )
    return {"schema": "simnet/1", "intersections": intersections, "directed_roads": roads}


def generate_demand(simnet: dict, n_trips: int, horizon_s: float, seed: int) -> dict:
    """Seeded uniform origin-destination trips with precomputed routes.

    Each trip draws from its own generator keyed by (seed, trip index), so
    output is independent of evaluation order. Origin = destination or
    unreachable pairs are redrawn up to 100 times; exhausting the budget
    raises.
    """
    if n_trips < 0:
        raise ValueError("n_trips must be >= 0")
    if horizon_s <= 0:
        raise ValueError("horizon_s must be > 0")
    vertices = sorted(i["id"] for i in simnet["intersections"])
    if not vertices and n_trips > 0:
        raise ValueError("cannot generate demand on an empty network")
    adjacency: dict[int, list[tuple[int, int, float]]] = {}
    for road in sorted(simnet["directed_roads"], key=lambda r: r["id"]):
        adjacency.setdefault(road["from"], []).append(
            (road["id"], road["to"], road["length_m"])
        )
    trips = []
    for i in range(n_trips):
        rng = np.random.default_rng([seed, i])
        route = None
        origin = destination = None
        for _ in range(100):
            origin = vertices[int(rng.integers(len(vertices)))]
            destination = vertices[int(rng.integers(len(vertices)))]
            if origin == destination:
                continue
            found = _dijkstra(adjacency, origin, destination)
            if found is not None:
                route = found[0]
                break
        if route is None:
            raise ValueError(f"no routable origin-destination pair found for trip {i}")
        trips.append(
            {
                "id": i,
                "origin": origin,
                "destination": destination,
                "departure_s": float(rng.uniform(0.0, horizon_s)),
                "route": list(route),
            }
        )
    return {"schema": "demand/1", "seed": seed, "horizon_s": horizon_s, "trips": trips}


def _wkt_linestring(geometry: tuple[GeoPoint, ...]) -> str:
    return "LINESTRING (" + ", ".join(f"{p.lon:.7f} {p.lat:.7f}" for p in geometry) + ")"


def _parse_wkt_linestring(text: str) -> tuple[GeoPoint, ...]:
    if not text.startswith("LINESTRING (") or not text.endswith(")"):
        raise ValueError(f"bad WKT linestring: {text!r}")
    pts = []
    for pair in text[len("LINESTRING (") : -1].split(", "):
        lon, lat = pair.split(" ")
        pts.append(GeoPoint(float(lat), float(lon)))
    return tuple(pts)


def export_graph(graph: RoadGraph, format: str) -> dict[str, bytes]:
    """Canonical serialization; returns file name -> content.

    csv: two sorted tables (vertices, split_edges with WKT geometry);
    json: one roadgraph/1 document; geojson: one FeatureCollection with
    Point features for vertices and LineString features for edges. Every
    format re-exports byte-identically after a load_graph round trip.
    """
    if format == "csv":
        vbuf = io.StringIO()
        vw = csv.writer(vbuf, lineterminator="\n")
        vw.writerow(["id", "lat", "lon", "degree"])
        for vid in sorted(graph.vertices):
            v = graph.vertices[vid]
            vw.writerow([vid, f"{v.location.lat:.7f}", f"{v.location.lon:.7f}", v.degree])
        ebuf = io.StringIO()
        ew = csv.writer(ebuf, lineterminator="\n")
        ew.writerow(["id", "from", "to", "length_m", "class", "oneway", "lanes", "geometry"])
        for eid in sorted(graph.edges):
            e = graph.edges[eid]
            ew.writerow(
                [
                    eid, e.from_vertex, e.to_vertex, repr(e.length_m),
                    e.road_class.value, int(e.oneway), e.lanes,
                    _wkt_linestring(e.geometry),
                ]
            )
        return {
            "vertices.csv": vbuf.getvalue().encode("utf-8"),
            "split_edges.csv": ebuf.getvalue().encode("utf-8"),
        }
    if format == "json":
        doc = {
            "schema": "roadgraph/1",
            "vertices": [
                {
                    "id": vid,
                    "lat": graph.vertices[vid].location.lat,
                    "lon": graph.vertices[vid].location.lon,
                    "degree": graph.vertices[vid].degree,
                }
                for vid in sorted(graph.vertices)
            ],
            "edges": [
                {
                    "id": eid,
                    "from": graph.edges[eid].from_vertex,
                    "to": graph.edges[eid].to_vertex,
                    "length_m": graph.edges[eid].length_m,
                    "class": graph.edges[eid].road_class.value,
                    "oneway": graph.edges[eid].oneway,
                    "lanes": graph.edges[eid].lanes,
                    "geometry": [[p.lon, p.lat] for p in graph.edges[eid].geometry],
                }
                for eid in sorted(graph.edges)
            ],
        }
        data = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
        return {"graph.json": data.encode("utf-8")}
    if format == "geojson":
        features = []
        for vid in sorted(graph.vertices):
            v = graph.vertices[vid]
            features.append(
                {
                    "type": "Feature",
                    "properties": {"kind": "vertex", "id": vid, "degree": v.degree},
                    "geometry": {"type": "Point",
                                 "coordinates": [v.location.lon, v.location.lat]},
                }
            )
        for eid in sorted(graph.edges):
            e = graph.edges[eid]
            features.append(
                {
                    "type": "Feature",
                    "properties": {
                        "kind": "edge", "id": eid, "from": e.from_vertex,
                        "to": e.to_vertex, "length_m": e.length_m,
                        "class": e.road_class.value, "oneway": e.oneway,
                        "lanes": e.lanes,
                    },
                    "geometry": {
                        "type": "LineString",
                        "coordinates": [[p.lon, p.lat] for p in e.geometry],
                    },
                }
            )
        doc = {"type": "FeatureCollection", "features": features}
        data = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
        return {"graph.geojson": data.encode("utf-8")}
    raise ValueError(f"unknown graph format {format!r} (expected one of {GRAPH_FORMATS})")


def _assemble_graph(vertex_rows, edge_rows) -> RoadGraph:
    graph = RoadGraph()
    for vid, lat, lon, degree in vertex_rows:
        graph.vertices[vid] = Vertex(vid, GeoPoint(lat, lon), degree)
    incident: dict[int, list[int]] = {vid: [] for vid in graph.vertices}
    for eid, fv, tv, length, cls, oneway, lanes, geometry in edge_rows:
        graph.edges[eid] = SplitEdge(
            id=eid, from_vertex=fv, to_vertex=tv, geometry=geometry,
            length_m=length, road_class=RoadClass(cls), oneway=oneway,
            lanes=lanes, source_way=0,
        )
        incident[fv].append(eid)
        if tv != fv:
            incident[tv].append(eid)
    for vid, eids in incident.items():
        graph.adjacency[vid] = tuple(sorted(eids))
    graph.validate()
    return graph


def load_graph(files: dict[str, bytes], format: str) -> RoadGraph:
    """Inverse of export_graph. The source_way attribution is not part of
    the serialized schema, so loaded edges carry source_way 0."""
    if format == "csv":
        vreader = csv.reader(io.StringIO(files["vertices.csv"].decode("utf-8")))
        ereader = csv.reader(io.StringIO(files["split_edges.csv"].decode("utf-8")))
        vheader = next(vreader)
        eheader = next(ereader)
        if vheader != ["id", "lat", "lon", "degree"]:
            raise ValueError("unexpected vertices.csv header")
        if eheader != ["id", "from", "to", "length_m", "class", "oneway", "lanes", "geometry"]:
            raise ValueError("unexpected split_edges.csv header")
        vertex_rows = [
            (int(r[0]), float(r[1]), float(r[2]), int(r[3])) for r in vreader if r
        ]
        edge_rows = [
            (
                int(r[0]), int(r[1]), int(r[2]), float(r[3]), r[4],
                bool(int(r[5])), int(r[6]), _parse_wkt_linestring(r[7]),
            )
            for r in ereader
            if r
        ]
        return _assemble_graph(vertex_rows, edge_rows)
    if format == "json":
        doc = json.loads(files["graph.json"].decode("utf-8"))
        if doc.get("schema") != "roadgraph/1":
            raise ValueError("not a roadgraph/1 document")
        vertex_rows = [(v["id"], v["lat"], v["lon"], v["degree"]) for v in doc["vertices"]]
        edge_rows = [
            (
                e["id"], e["from"], e["to"], e["length_m"], e["class"],
                bool(e["oneway"]), e["lanes"],
                tuple(GeoPoint(lat, lon) for lon, lat in e["geometry"]),
            )
            for e in doc["edges"]
        ]
        return _assemble_graph(vertex_rows, edge_rows)
    if format == "geojson":
        doc = json.loads(files["graph.geojson"].decode("utf-8"))
        if doc.get("type") != "FeatureCollection":
            raise ValueError("not a FeatureCollection")
        vertex_rows, edge_rows = [], []
        for feature in doc["features"]:
            props = feature["properties"]
            geom = feature["geometry"]
            if props["kind"] == "vertex":
                lon, lat = geom["coordinates"]
                vertex_rows.append((props["id"], lat, lon, props["degree"]))
            else:
                edge_rows.append(
                    (
                        props["id"], props["from"], props["to"], props["length_m"],
                        props["class"], bool(props["oneway"]), props["lanes"],
                        tuple(GeoPoint(lat, lon) for lon, lat in geom["coordinates"]),
                    )
                )
        return _assemble_graph(vertex_rows, edge_rows)
    raise ValueError(f"unknown graph format {format!r} (expected one of {GRAPH_FORMATS})")
