"""Shared fixtures: the documented cross fixture plus synthetic builders.

The cross fixture is two ways meeting at one interior node. Way 10 runs
through nodes 1-2-3-4 and way 11 through 5-3-6, so node 3 is shared, node 2
is shape-only, and the expected result is 5 vertices and 4 split edges.
"""

import numpy as np
import pytest

from roadnet.geo import GeoPoint, polyline_length
from roadnet.graphbuild import RoadGraph, SplitEdge, Vertex
from roadnet.osmxml import RawNode, RawWay, RoadClass, parse_osm_xml

CROSS_XML = b"""<?xml version='1.0' encoding='UTF-8'?>
<osm version="0.6" generator="fixture">
  <node id="1" lat="40.0000000" lon="-74.0000000"/>
  <node id="2" lat="40.0010000" lon="-74.0000000"/>
  <node id="3" lat="40.0020000" lon="-74.0000000"/>
  <node id="4" lat="40.0030000" lon="-74.0000000"/>
  <node id="5" lat="40.0020000" lon="-74.0010000"/>
  <node id="6" lat="40.0020000" lon="-73.9990000"/>
  <way id="10">
    <nd ref="1"/>
    <nd ref="2"/>
    <nd ref="3"/>
    <nd ref="4"/>
    <tag k="highway" v="residential"/>
  </way>
  <way id="11">
    <nd ref="5"/>
    <nd ref="3"/>
    <nd ref="6"/>
    <tag k="highway" v="residential"/>
  </way>
</osm>
"""


@pytest.fixture
def cross_parse():
    return parse_osm_xml(CROSS_XML)


def lattice_fixture(rng, n_ways, grid=12, origin=(40.0, -74.0), step=0.001):
    """Random-walk ways on a node lattice.

    Walks share lattice nodes, so intersections arise naturally; a step
    always moves to a different node, so no way contains consecutive
    duplicate refs.
    """
    nodes = {}
    for r in range(grid):
        for c in range(grid):
            nid = r * grid + c + 1
            nodes[nid] = RawNode(
                nid, GeoPoint(origin[0] + r * step, origin[1] + c * step), {}
            )
    ways = []
    for w in range(n_ways):
        r = int(rng.integers(0, grid))
        c = int(rng.integers(0, grid))
        refs = [r * grid + c + 1]
        steps = int(rng.integers(2, 10))
        while len(refs) < steps + 1:
            dr, dc = ((0, 1), (0, -1), (1, 0), (-1, 0))[int(rng.integers(0, 4))]
            if 0 <= r + dr < grid and 0 <= c + dc < grid:
                r, c = r + dr, c + dc
                refs.append(r * grid + c + 1)
        ways.append(RawWay(1000 + w, tuple(refs), {"highway": "residential"}))
    return nodes, ways


def synthetic_graph(n_vertices, seed=0, extent=(40.0, 41.0, -74.0, -73.0),
                    extra_edges=0, oneway_share=0.0):
    """A valid RoadGraph with random vertex locations.

    A chain over all vertices keeps every degree >= 1; extra random edges
    (optionally oneway) add branching for routing tests.
    """
    if n_vertices < 2:
        raise ValueError("need at least 2 vertices")
    rng = np.random.default_rng(seed)
    lat0, lat1, lon0, lon1 = extent
    lats = rng.uniform(lat0, lat1, n_vertices)
    lons = rng.uniform(lon0, lon1, n_vertices)
    locs = {i + 1: GeoPoint(float(lats[i]), float(lons[i])) for i in range(n_vertices)}

    edges = {}
    incident = {vid: set() for vid in locs}
    seen = set()

    def add(a, b, oneway):
        eid = len(edges) + 1
        geometry = (locs[a], locs[b])
        edges[eid] = SplitEdge(
            id=eid, from_vertex=a, to_vertex=b, geometry=geometry,
            length_m=polyline_length(geometry), road_class=RoadClass.RESIDENTIAL,
            oneway=oneway, lanes=1, source_way=eid,
        )
        incident[a].add(eid)
        incident[b].add(eid)
        seen.add((a, b))

    for i in range(1, n_vertices):
        add(i, i + 1, False)
    added = 0
    attempts = 0
    while added < extra_edges and attempts < extra_edges * 50 + 50:
        attempts += 1
        a = int(rng.integers(1, n_vertices + 1))
        b = int(rng.integers(1, n_vertices + 1))
        if a == b or (a, b) in seen:
            continue
        add(a, b, bool(rng.random() < oneway_share))
        added += 1

    vertices = {vid: Vertex(vid, locs[vid], len(incident[vid])) for vid in locs}
    adjacency = {vid: tuple(sorted(incident[vid])) for vid in locs}
    graph = RoadGraph(vertices, edges, adjacency)
    graph.validate()
    return graph
