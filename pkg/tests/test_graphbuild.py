import dataclasses

import numpy as np
import pytest

from roadnet.geo import GeoPoint, haversine_distance, polyline_length
from roadnet.graphbuild import (
    InvariantError,
    RoadGraph,
    build_graph,
    clean_graph,
    detect_intersections,
    split_ways,
)
from roadnet.osmxml import RawNode, RawWay, filter_roads, parse_osm_xml

from conftest import lattice_fixture, synthetic_graph


def nodes_of(*coords):
    return {
        i + 1: RawNode(i + 1, GeoPoint(lat, lon), {})
        for i, (lat, lon) in enumerate(coords)
    }


def road(way_id, refs, **tags):
    tags.setdefault("highway", "residential")
    return RawWay(way_id, tuple(refs), tags)


def test_cross_fixture_intersections(cross_parse):
    ways = filter_roads(cross_parse.ways)
    assert detect_intersections(ways, cross_parse.node_lookup()) == {1, 3, 4, 5, 6}


def test_cross_fixture_split(cross_parse):
    ways = filter_roads(cross_parse.ways)
    nodes = cross_parse.node_lookup()
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    assert [(e.id, e.from_vertex, e.to_vertex) for e in edges] == [
        (1, 1, 3),
        (2, 3, 4),
        (3, 5, 3),
        (4, 3, 6),
    ]


def test_cross_fixture_full_graph(cross_parse):
    graph = build_graph(filter_roads(cross_parse.ways), cross_parse.node_lookup())
    assert len(graph.vertices) == 5
    assert len(graph.edges) == 4
    assert graph.vertices[3].degree == 4
    for vid in (1, 4, 5, 6):
        assert graph.vertices[vid].degree == 1
    graph.validate()


def test_isolated_way_endpoints_only():
    nodes = nodes_of((0, 0), (0, 0.001), (0, 0.002))
    ways = [road(1, (1, 2, 3))]
    assert detect_intersections(ways, nodes) == {1, 3}
    edges = split_ways(ways, {1, 3}, nodes)
    assert len(edges) == 1
    assert len(edges[0].geometry) == 3


def test_intersections_match_brute_force_oracle():
    rng = np.random.default_rng(7)
    nodes, ways = lattice_fixture(rng, 50)

    expected = set()
    ways_touching = {}
    for w in ways:
        expected.add(w.node_refs[0])
        expected.add(w.node_refs[-1])
        counts = {}
        for r in w.node_refs:
            counts[r] = counts.get(r, 0) + 1
        expected |= {r for r, c in counts.items() if c > 1}
        for r in set(w.node_refs):
            ways_touching[r] = ways_touching.get(r, 0) + 1
    expected |= {r for r, c in ways_touching.items() if c >= 2}

    assert detect_intersections(ways, nodes) == expected


def test_split_concatenation_and_length_conservation():
    rng = np.random.default_rng(11)
    nodes, ways = lattice_fixture(rng, 60)
    intersections = detect_intersections(ways, nodes)
    edges = split_ways(ways, intersections, nodes)

    by_way = {}
    for e in edges:
        by_way.setdefault(e.source_way, []).append(e)
    for w in ways:
        pieces = sorted(by_way[w.id], key=lambda e: e.id)
        merged = list(pieces[0].geometry)
        for p in pieces[1:]:
            assert p.geometry[0] == merged[-1]
            merged.extend(p.geometry[1:])
        original = [nodes[r].location for r in w.node_refs]
        assert merged == original

    total_ways = sum(polyline_length([nodes[r].location for r in w.node_refs]) for w in ways)
    total_edges = sum(e.length_m for e in edges)
    assert total_edges == pytest.approx(total_ways, rel=1e-9)


def test_pure_loop_splits_at_midpoint():
    nodes = nodes_of((0, 0), (0, 0.001), (0.001, 0.001), (0.001, 0))
    ways = [road(1, (1, 2, 3, 4, 1))]
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    assert [(e.from_vertex, e.to_vertex) for e in edges] == [(1, 3), (3, 1)]
    merged = list(edges[0].geometry) + list(edges[1].geometry[1:])
    assert merged == [nodes[r].location for r in (1, 2, 3, 4, 1)]


def test_self_intersecting_way_cuts_at_repeat():
    nodes = nodes_of((0, 0), (0, 0.001), (0.001, 0.001), (0, 0.002))
    ways = [road(1, (1, 2, 3, 2, 4))]
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    pairs = [(e.from_vertex, e.to_vertex) for e in edges]
    assert pairs == [(1, 2), (2, 3), (3, 2), (2, 4)]


def test_consecutive_duplicate_refs_collapse():
    nodes = nodes_of((0, 0), (0, 0.001), (0, 0.002))
    ways = [road(1, (1, 2, 2, 3))]
    assert detect_intersections(ways, nodes) == {1, 3}
    edges = split_ways(ways, {1, 3}, nodes)
    assert len(edges) == 1
    assert len(edges[0].geometry) == 3


def test_reverse_oneway_flips_node_order():
    nodes = nodes_of((0, 0), (0, 0.001), (0, 0.002))
    ways = [road(1, (1, 2, 3), oneway="-1")]
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    e = edges[0]
    assert (e.from_vertex, e.to_vertex) == (3, 1)
    assert e.oneway
    assert e.geometry == tuple(nodes[r].location for r in (3, 2, 1))


def test_lane_and_speed_tag_parsing():
    nodes = nodes_of((0, 0), (0, 0.001))
    ways = [
        road(1, (1, 2), lanes="4", maxspeed="50"),
        road(2, (1, 2), lanes="junk"),
        road(3, (1, 2), lanes="-2", maxspeed="30 mph"),
        road(4, (1, 2), maxspeed="none"),
    ]
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    assert [e.lanes for e in edges] == [4, 1, 1, 1]
    assert edges[0].maxspeed_kmh == 50.0
    assert edges[1].maxspeed_kmh is None
    assert edges[2].maxspeed_kmh == pytest.approx(48.28032)
    assert edges[3].maxspeed_kmh is None


def test_snap_merges_nearby_endpoints():
    # way 1 ends ~2 m south of where way 2 starts
    nodes = nodes_of(
        (40.0, -74.0), (40.001, -74.0), (40.001018, -74.0), (40.002018, -74.0)
    )
    gap = haversine_distance(nodes[2].location, nodes[3].location)
    assert gap < 5.0
    ways = [road(1, (1, 2)), road(2, (3, 4))]
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    graph = clean_graph(edges, snap_radius=5.0, component_min_length=0.0)
    # ids 2 and 3 merged into 2; both edges survive and share it
    assert set(graph.vertices) == {1, 2, 4}
    assert graph.vertices[2].degree == 2
    for e in graph.edges.values():
        assert e.geometry[0] == graph.vertices[e.from_vertex].location
        assert e.geometry[-1] == graph.vertices[e.to_vertex].location


def test_snap_zero_radius_is_a_no_op():
    nodes = nodes_of((40.0, -74.0), (40.001, -74.0), (40.001018, -74.0), (40.002018, -74.0))
    ways = [road(1, (1, 2)), road(2, (3, 4))]
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    graph = clean_graph(edges, snap_radius=0.0, component_min_length=0.0)
    assert set(graph.vertices) == {1, 2, 3, 4}


def test_duplicate_way_dedupes_to_single_edge():
    nodes = nodes_of((0, 0), (0, 0.001))
    once = [road(1, (1, 2))]
    twice = [road(1, (1, 2)), road(2, (1, 2))]
    g1 = build_graph(once, nodes, component_min_length=0.0)
    g2 = build_graph(twice, nodes, component_min_length=0.0)
    assert len(g1.edges) == len(g2.edges) == 1


def test_duplicate_way_with_interior_node_conserves_length():
    # the copy makes node 2 shared between two ways, so both copies split
    # there and the halves dedupe pairwise
    nodes = nodes_of((0, 0), (0, 0.001), (0, 0.002))
    once = [road(1, (1, 2, 3))]
    twice = [road(1, (1, 2, 3)), road(2, (1, 2, 3))]
    g1 = build_graph(once, nodes, component_min_length=0.0)
    g2 = build_graph(twice, nodes, component_min_length=0.0)
    assert len(g2.edges) == 2
    total1 = sum(e.length_m for e in g1.edges.values())
    total2 = sum(e.length_m for e in g2.edges.values())
    assert total2 == pytest.approx(total1, rel=1e-12)


def test_component_pruning_threshold():
    # ~111 m per 0.001 deg of latitude; stub is ~50 m, main road ~150 m
    nodes = nodes_of(
        (40.0, -74.0), (40.00135, -74.0),
        (40.0, -73.9), (40.00045, -73.9),
    )
    main = polyline_length([nodes[1].location, nodes[2].location])
    stub = polyline_length([nodes[3].location, nodes[4].location])
    assert main > 100.0 > stub
    ways = [road(1, (1, 2)), road(2, (3, 4))]
    edges = split_ways(ways, detect_intersections(ways, nodes), nodes)
    graph = clean_graph(edges, snap_radius=5.0, component_min_length=100.0)
    assert set(graph.vertices) == {1, 2}
    assert len(graph.edges) == 1


def test_clean_graph_empty_input():
    graph = clean_graph([])
    assert graph.vertices == {}
    assert graph.edges == {}
    graph.validate()


def test_total_length_after_clean_drops_only_pruned():
    rng = np.random.default_rng(3)
    nodes, ways = lattice_fixture(rng, 40)
    intersections = detect_intersections(ways, nodes)
    edges = split_ways(ways, intersections, nodes)
    before = sum(e.length_m for e in edges)
    # snap radius 0 and no pruning: nothing changes but dedupe
    graph = clean_graph(edges, snap_radius=0.0, component_min_length=0.0)
    dedup_keys = {(e.from_vertex, e.to_vertex, e.geometry) for e in edges}
    assert len(graph.edges) == len(dedup_keys)
    assert graph.total_length_m() <= before + 1e-9


def test_validate_rejects_missing_vertex():
    graph = synthetic_graph(5, seed=1)
    del graph.vertices[3]
    del graph.adjacency[3]
    with pytest.raises(InvariantError):
        graph.validate()


def test_validate_rejects_wrong_length():
    graph = synthetic_graph(5, seed=2)
    e = graph.edges[1]
    graph.edges[1] = dataclasses.replace(e, length_m=e.length_m + 1.0)
    with pytest.raises(InvariantError):
        graph.validate()


def test_validate_rejects_inconsistent_adjacency():
    graph = synthetic_graph(5, seed=3)
    graph.adjacency[1] = ()
    with pytest.raises(InvariantError):
        graph.validate()


def test_validate_rejects_degree_zero():
    graph = synthetic_graph(5, seed=4)
    from roadnet.graphbuild import Vertex

    graph.vertices[99] = Vertex(99, GeoPoint(0.0, 0.0), 0)
    graph.adjacency[99] = ()
    with pytest.raises(InvariantError):
        graph.validate()
