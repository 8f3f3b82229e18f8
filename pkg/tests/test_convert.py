import math

import numpy as np
import pytest

from roadnet.convert import (
    DEFAULT_MAX_MATCH_DISTANCE_M,
    GRAPH_FORMATS,
    SPEED_KMH_BY_CLASS,
    export_graph,
    export_simnet,
    generate_demand,
    load_graph,
    map_sensors,
    sensor_mapping_to_csv,
    sensors_from_csv,
    shortest_path,
)
from roadnet.geo import GeoPoint, haversine_distance, polyline_length
from roadnet.graphbuild import RoadGraph, SplitEdge, Vertex, build_graph
from roadnet.osmxml import RoadClass, filter_roads
from roadnet.spatial import KdIndex, PointSet, build_kd

from conftest import synthetic_graph


def graph_from_specs(coords, edge_specs, road_class=RoadClass.RESIDENTIAL):
    """Explicit tiny graphs: coords maps vertex id -> (lat, lon), edge_specs
    lists (edge id, from, to, oneway[, via]) with `via` optional interior
    geometry points."""
    locs = {vid: GeoPoint(lat, lon) for vid, (lat, lon) in coords.items()}
    edges = {}
    incident = {vid: set() for vid in locs}
    for spec in edge_specs:
        eid, a, b, oneway = spec[:4]
        via = tuple(GeoPoint(lat, lon) for lat, lon in spec[4]) if len(spec) > 4 else ()
        geometry = (locs[a],) + via + (locs[b],)
        edges[eid] = SplitEdge(
            id=eid, from_vertex=a, to_vertex=b, geometry=geometry,
            length_m=polyline_length(geometry), road_class=road_class,
            oneway=oneway, lanes=1, source_way=eid,
        )
        incident[a].add(eid)
        incident[b].add(eid)
    vertices = {vid: Vertex(vid, locs[vid], len(incident[vid])) for vid in locs}
    adjacency = {vid: tuple(sorted(incident[vid])) for vid in locs}
    graph = RoadGraph(vertices, edges, adjacency)
    graph.validate()
    return graph


def bellman_ford(graph, src):
    """Relaxation to fixpoint; the slow oracle for shortest_path."""
    dist = {vid: math.inf for vid in graph.vertices}
    dist[src] = 0.0
    links = []
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        links.append((e.from_vertex, e.to_vertex, e.length_m))
        if not e.oneway:
            links.append((e.to_vertex, e.from_vertex, e.length_m))
    changed = True
    while changed:
        changed = False
        for a, b, w in links:
            nd = dist[a] + w
            if nd < dist[b]:
                dist[b] = nd
                changed = True
    return dist


def test_map_sensors_matches_brute_force():
    graph = synthetic_graph(120, seed=1, extent=(40.0, 40.1, -74.0, -73.9))
    index = build_kd(graph)
    rng = np.random.default_rng(2)
    sensors = [
        (f"s{i}", GeoPoint(float(rng.uniform(40.0, 40.1)), float(rng.uniform(-74.0, -73.9))))
        for i in range(25)
    ]
    mapping = map_sensors(sensors, index, max_match_distance=2000.0)
    for sid, point in sensors:
        best = min(
            ((haversine_distance(point, v.location), vid) for vid, v in graph.vertices.items()),
        )
        got = mapping.assignments[sid]
        if best[0] > 2000.0:
            assert got is None
        else:
            assert got[0] == best[1]
            assert got[1] == pytest.approx(best[0], rel=1e-9, abs=1e-9)


def test_map_sensors_cutoff_and_empty_index():
    graph = synthetic_graph(5, seed=3, extent=(40.0, 40.001, -74.0, -73.999))
    index = build_kd(graph)
    far = [("far", GeoPoint(50.0, 0.0))]
    assert map_sensors(far, index).assignments["far"] is None
    empty = KdIndex(PointSet.from_coords([], [], []))
    assert map_sensors(far, empty).assignments["far"] is None


def test_map_sensors_rejects_duplicate_ids():
    graph = synthetic_graph(5, seed=4)
    index = build_kd(graph)
    sensors = [("a", GeoPoint(40.0, -74.0)), ("a", GeoPoint(40.1, -74.0))]
    with pytest.raises(ValueError):
        map_sensors(sensors, index)


def test_sensor_csv_round_trip():
    data = b"sensor_id,lat,lon\ns1,40.5,-73.5\ns2,40.6,-73.6\n"
    sensors = sensors_from_csv(data)
    assert sensors[0] == ("s1", GeoPoint(40.5, -73.5))
    with pytest.raises(ValueError):
        sensors_from_csv(b"id,lat,lon\nx,0,0\n")


def test_sensor_mapping_csv_format():
    graph = synthetic_graph(10, seed=5, extent=(40.0, 40.01, -74.0, -73.99))
    index = build_kd(graph)
    sensors = [
        ("near", graph.vertices[1].location),
        ("far", GeoPoint(-40.0, 100.0)),
    ]
    csv_bytes = sensor_mapping_to_csv(map_sensors(sensors, index))
    lines = csv_bytes.decode("utf-8").splitlines()
    assert lines[0] == "sensor_id,vertex_id,distance_m"
    assert lines[1] == "near,1,0.0"
    assert lines[2] == "far,UNMATCHED,"


def test_shortest_path_requires_known_endpoints():
    graph = synthetic_graph(5, seed=6)
    with pytest.raises(ValueError):
        shortest_path(graph, 1, 99)


def test_shortest_path_trivial_and_direct():
    graph = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.001)},
        [(1, 1, 2, False)],
    )
    same = shortest_path(graph, 1, 1)
    assert same.edge_ids == () and same.length_m == 0.0
    path = shortest_path(graph, 1, 2)
    assert path.edge_ids == (1,)
    assert path.length_m == graph.edges[1].length_m


def test_shortest_path_respects_oneway():
    graph = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.001)},
        [(1, 1, 2, True)],
    )
    assert shortest_path(graph, 1, 2) is not None
    assert shortest_path(graph, 2, 1) is None


def test_shortest_path_tie_breaks_to_smaller_edge_ids():
    # two parallel routes of exactly equal length (mirror geometry)
    graph = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.002)},
        [
            (1, 1, 2, False, [(0.0005, 0.001)]),
            (2, 1, 2, False, [(-0.0005, 0.001)]),
        ],
    )
    assert graph.edges[1].length_m == graph.edges[2].length_m
    assert shortest_path(graph, 1, 2).edge_ids == (1,)


def test_shortest_path_picks_cheaper_route():
    # direct edge is longer than the two-hop detour
    graph = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.002), 3: (0.0, 0.001)},
        [
            (1, 1, 2, False, [(0.002, 0.001)]),
            (2, 1, 3, False),
            (3, 3, 2, False),
        ],
    )
    path = shortest_path(graph, 1, 2)
    assert path.edge_ids == (2, 3)
    walked = 0.0
    for eid in path.edge_ids:
        walked += graph.edges[eid].length_m
    assert path.length_m == walked


def test_shortest_path_equals_relaxation_oracle():
    graph = synthetic_graph(80, seed=7, extra_edges=120, oneway_share=0.3)
    rng = np.random.default_rng(8)
    for _ in range(30):
        src = int(rng.integers(1, 81))
        dst = int(rng.integers(1, 81))
        oracle = bellman_ford(graph, src)[dst]
        got = shortest_path(graph, src, dst)
        if math.isinf(oracle):
            assert got is None
        else:
            assert got.length_m == oracle


def test_simnet_cross_fixture(cross_parse):
    graph = build_graph(filter_roads(cross_parse.ways), cross_parse.node_lookup())
    net = export_simnet(graph)
    assert net["schema"] == "simnet/1"
    assert len(net["directed_roads"]) == 8  # 4 bidirectional edges
    center = next(i for i in net["intersections"] if i["id"] == 3)
    assert len(center["incoming"]) == 4
    assert len(center["phases"]) == 4
    assert [p["id"] for p in center["phases"]] == [0, 1, 2, 3]
    assert all(p["duration_s"] == 30 for p in center["phases"])
    for node in net["intersections"]:
        if node["id"] != 3:
            assert node["phases"] == []


def test_simnet_road_ids_encode_direction():
    graph = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.001), 3: (0.0, 0.002)},
        [(1, 1, 2, False), (2, 2, 3, True)],
    )
    net = export_simnet(graph)
    ids = {(r["id"], r["direction"], r["from"], r["to"]) for r in net["directed_roads"]}
    assert ids == {
        (2, "fwd", 1, 2),
        (3, "rev", 2, 1),
        (4, "fwd", 2, 3),
    }


def test_simnet_lane_split():
    base = {1: (0.0, 0.0), 2: (0.0, 0.001)}

    def lanes_of(lanes, oneway):
        graph = graph_from_specs(base, [(1, 1, 2, oneway)])
        e = graph.edges[1]
        graph.edges[1] = SplitEdge(
            id=1, from_vertex=1, to_vertex=2, geometry=e.geometry,
            length_m=e.length_m, road_class=e.road_class, oneway=oneway,
            lanes=lanes, source_way=1,
        )
        return [r["lanes"] for r in export_simnet(graph)["directed_roads"]]

    assert lanes_of(4, oneway=False) == [2, 2]
    assert lanes_of(1, oneway=False) == [1, 1]
    assert lanes_of(3, oneway=True) == [3]


def test_simnet_speed_table_and_maxspeed_override():
    graph = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.001)},
        [(1, 1, 2, True)],
        road_class=RoadClass.MOTORWAY,
    )
    assert export_simnet(graph)["directed_roads"][0]["speed_kmh"] == 120.0
    e = graph.edges[1]
    graph.edges[1] = SplitEdge(
        id=1, from_vertex=1, to_vertex=2, geometry=e.geometry, length_m=e.length_m,
        road_class=e.road_class, oneway=True, lanes=1, source_way=1, maxspeed_kmh=90.0,
    )
    assert export_simnet(graph)["directed_roads"][0]["speed_kmh"] == 90.0
    assert SPEED_KMH_BY_CLASS[RoadClass.RESIDENTIAL] == 40.0


def test_simnet_degree_three_needs_two_incoming_for_phases():
    # all three edges leave the hub: degree 3 but nothing comes in
    graph = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.001), 3: (0.001, 0.0), 4: (-0.001, 0.0)},
        [(1, 1, 2, True), (2, 1, 3, True), (3, 1, 4, True)],
    )
    net = export_simnet(graph)
    hub = next(i for i in net["intersections"] if i["id"] == 1)
    assert len(hub["outgoing"]) == 3
    assert hub["incoming"] == []
    assert hub["phases"] == []
    # reversing every edge gives three incoming roads and therefore phases
    flipped = graph_from_specs(
        {1: (0.0, 0.0), 2: (0.0, 0.001), 3: (0.001, 0.0), 4: (-0.001, 0.0)},
        [(1, 2, 1, True), (2, 3, 1, True), (3, 4, 1, True)],
    )
    hub = next(i for i in export_simnet(flipped)["intersections"] if i["id"] == 1)
    assert len(hub["phases"]) == 3


def test_simnet_directed_length_totals():
    graph = synthetic_graph(30, seed=9, extra_edges=20, oneway_share=0.4)
    net = export_simnet(graph)
    expected = sum(
        e.length_m * (1 if e.oneway else 2) for e in graph.edges.values()
    )
    assert sum(r["length_m"] for r in net["directed_roads"]) == pytest.approx(expected, rel=1e-12)


def test_generate_demand_is_deterministic_and_routable():
    graph = synthetic_graph(25, seed=10, extra_edges=15)
    net = export_simnet(graph)
    a = generate_demand(net, n_trips=12, horizon_s=3600.0, seed=5)
    b = generate_demand(net, n_trips=12, horizon_s=3600.0, seed=5)
    assert a == b
    c = generate_demand(net, n_trips=12, horizon_s=3600.0, seed=6)
    assert c != a

    roads = {r["id"]: r for r in net["directed_roads"]}
    for trip in a["trips"]:
        assert 0.0 <= trip["departure_s"] < 3600.0
        assert trip["origin"] != trip["destination"]
        route = trip["route"]
        assert route, "route must be non-empty"
        assert roads[route[0]]["from"] == trip["origin"]
        assert roads[route[-1]]["to"] == trip["destination"]
        for prev, nxt in zip(route, route[1:]):
            assert roads[prev]["to"] == roads[nxt]["from"]


def test_generate_demand_validation():
    graph = synthetic_graph(5, seed=11)
    net = export_simnet(graph)
    with pytest.raises(ValueError):
        generate_demand(net, n_trips=-1, horizon_s=10.0, seed=0)
    with pytest.raises(ValueError):
        generate_demand(net, n_trips=1, horizon_s=0.0, seed=0)
    empty = {"schema": "simnet/1", "intersections": [], "directed_roads": []}
    with pytest.raises(ValueError):
        generate_demand(empty, n_trips=1, horizon_s=10.0, seed=0)
    assert generate_demand(empty, n_trips=0, horizon_s=10.0, seed=0)["trips"] == []


@pytest.mark.parametrize("format", GRAPH_FORMATS)
def test_export_load_export_is_a_fixpoint(format):
    graph = synthetic_graph(40, seed=12, extra_edges=25, oneway_share=0.3)
    first = export_graph(graph, format)
    loaded = load_graph(first, format)
    second = export_graph(loaded, format)
    assert first == second
    assert sorted(loaded.vertices) == sorted(graph.vertices)
    assert sorted(loaded.edges) == sorted(graph.edges)
    for eid, e in graph.edges.items():
        le = loaded.edges[eid]
        assert le.geometry == e.geometry
        assert le.length_m == e.length_m
        assert le.oneway == e.oneway
        assert le.source_way == 0  # provenance is not serialized


def test_export_graph_rejects_unknown_format():
    graph = synthetic_graph(3, seed=13)
    with pytest.raises(ValueError):
        export_graph(graph, "xml")


def test_export_empty_graph_has_headers_only():
    empty = RoadGraph()
    files = export_graph(empty, "csv")
    assert files["vertices.csv"] == b"id,lat,lon,degree\n"
    assert files["split_edges.csv"] == b"id,from,to,length_m,class,oneway,lanes,geometry\n"
    assert load_graph(files, "csv").vertices == {}


def test_load_graph_rejects_wrong_headers():
    files = {
        "vertices.csv": b"vertex,lat,lon,degree\n",
        "split_edges.csv": b"id,from,to,length_m,class,oneway,lanes,geometry\n",
    }
    with pytest.raises(ValueError):
        load_graph(files, "csv")


def test_load_graph_rejects_wrong_schema():
    with pytest.raises(ValueError):
        load_graph({"graph.json": b'{"schema":"other/9"}'}, "json")


def test_exported_wkt_uses_lon_lat_order():
    graph = graph_from_specs({1: (40.0, -74.0), 2: (40.001, -74.0)}, [(1, 1, 2, False)])
    files = export_graph(graph, "csv")
    text = files["split_edges.csv"].decode("utf-8")
    assert "LINESTRING (-74.0000000 40.0000000, -74.0000000 40.0010000)" in text
