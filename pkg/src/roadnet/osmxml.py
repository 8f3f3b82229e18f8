"""OSM XML (0.6 subset) parsing and road/POI filtering.

Handled elements: <node id lat lon> with <tag k v> children, and <way id>
with ordered <nd ref> and <tag k v> children. Everything else (relations,
changesets, bounds, ...) is skipped and counted. Parsing streams through
expat, so extracts larger than memory-resident DOM trees are fine.
"""

from __future__ import annotations

import enum
import xml.parsers.expat
from dataclasses import dataclass, field
from xml.sax.saxutils import quoteattr

from .geo import GeoPoint


class OsmParseError(ValueError):
    """Malformed OSM XML; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class RawNode:
    id: int
    location: GeoPoint
    tags: dict[str, str]


@dataclass(frozen=True)
class RawWay:
    id: int
    node_refs: tuple[int, ...]
    tags: dict[str, str]


class RoadClass(enum.Enum):
    MOTORWAY = "motorway"
    TRUNK = "trunk"
    PRIMARY = "primary"
    SECONDARY = "secondary"
    TERTIARY = "tertiary"
    UNCLASSIFIED = "unclassified"
    RESIDENTIAL = "residential"
    SERVICE = "service"
    OTHER = "other"


# highway values kept in the road graph; *_link folds into the parent class.
_HIGHWAY_TO_CLASS = {
    "motorway": RoadClass.MOTORWAY,
    "motorway_link": RoadClass.MOTORWAY,
    "trunk": RoadClass.TRUNK,
    "trunk_link": RoadClass.TRUNK,
    "primary": RoadClass.PRIMARY,
    "primary_link": RoadClass.PRIMARY,
    "secondary": RoadClass.SECONDARY,
    "secondary_link": RoadClass.SECONDARY,
    "tertiary": RoadClass.TERTIARY,
    "tertiary_link": RoadClass.TERTIARY,
    "unclassified": RoadClass.UNCLASSIFIED,
    "residential": RoadClass.RESIDENTIAL,
    "service": RoadClass.SERVICE,
}

_POI_KEYS = ("amenity", "shop", "tourism")


def road_class_of(way: RawWay) -> RoadClass:
    """Class of a way's highway tag; OTHER when absent or not whitelisted."""
    return _HIGHWAY_TO_CLASS.get(way.tags.get("highway", ""), RoadClass.OTHER)


@dataclass
class ParseReport:
    unresolved: list[tuple[int, int]] = field(default_factory=list)  # (way id, missing node ref)
    dropped_ways: list[int] = field(default_factory=list)
    ignored_elements: dict[str, int] = field(default_factory=dict)


@dataclass
class ParseResult:
    nodes: list[RawNode]
    ways: list[RawWay]
    report: ParseReport

    def node_lookup(self) -> dict[int, RawNode]:
        return {n.id: n for n in self.nodes}


class _Handler:
    _KNOWN = {"osm", "node", "way", "nd", "tag", "bounds"}

    def __init__(self):
        self.nodes: list[RawNode] = []
        self.ways: list[tuple[int, list[int], dict[str, str]]] = []
        self.report = ParseReport()
        self._cur_node = None  # (id, lat, lon)
        self._cur_tags: dict[str, str] | None = None
        self._cur_way = None  # (id, refs)

    def start(self, name, attrs):
        if name == "node":
            self._cur_node = (int(attrs["id"]), float(attrs["lat"]), float(attrs["lon"]))
            self._cur_tags = {}
        elif name == "way":
            self._cur_way = (int(attrs["id"]), [])
            self._cur_tags = {}
        elif name == "nd":
            if self._cur_way is not None:
                self._cur_way[1].append(int(attrs["ref"]))
        elif name == "tag":
            if self._cur_tags is not None:
                self._cur_tags[attrs["k"]] = attrs["v"]
        elif name not in self._KNOWN:
            counts = self.report.ignored_elements
            counts[name] = counts.get(name, 0) + 1

    def end(self, name):
        if name == "node" and self._cur_node is not None:
            nid, lat, lon = self._cur_node
            self.nodes.append(RawNode(nid, GeoPoint(lat, lon), self._cur_tags))
            self._cur_node = None
            self._cur_tags = None
        elif name == "way" and self._cur_way is not None:
            wid, refs = self._cur_way
            self.ways.append((wid, refs, self._cur_tags))
            self._cur_way = None
            self._cur_tags = None


def parse_osm_xml(source) -> ParseResult:
    """Parse an OSM XML byte stream (path, bytes, or binary file object).

    Ways referencing a node missing from the extract are dropped and listed
    in the report rather than failing the parse. Malformed XML raises
    OsmParseError with the byte offset.
    """
    if isinstance(source, (str, bytes)) and not isinstance(source, bytes):
        with open(source, "rb") as fh:
            return parse_osm_xml(fh)

    handler = _Handler()
    parser = xml.parsers.expat.ParserCreate()
    parser.StartElementHandler = handler.start
    parser.EndElementHandler = handler.end
    parser.buffer_text = True
    try:
        if isinstance(source, bytes):
            parser.Parse(source, True)
        else:
            parser.ParseFile(source)
    except xml.parsers.expat.ExpatError as exc:
        raise OsmParseError(str(exc), parser.ErrorByteIndex) from exc

    known = {n.id for n in handler.nodes}
    ways: list[RawWay] = []
    for wid, refs, tags in handler.ways:
        missing = [r for r in refs if r not in known]
        if missing:
            handler.report.unresolved.extend((wid, r) for r in missing)
            handler.report.dropped_ways.append(wid)
        elif len(refs) >= 2:
            ways.append(RawWay(wid, tuple(refs), tags))
        else:
            handler.report.dropped_ways.append(wid)
    return ParseResult(handler.nodes, ways, handler.report)


def filter_roads(ways: list[RawWay]) -> list[RawWay]:
    """Ways whose highway tag is in the road-class whitelist, sorted by id."""
    kept = [w for w in ways if road_class_of(w) is not RoadClass.OTHER]
    kept.sort(key=lambda w: w.id)
    return kept


def filter_pois(nodes: list[RawNode]) -> list[RawNode]:
    """Nodes carrying a POI tag (amenity/shop/tourism), sorted by id.

    These pass through to exports untouched and never enter the road graph.
    """
    kept = [n for n in nodes if any(k in n.tags for k in _POI_KEYS)]
    kept.sort(key=lambda n: n.id)
    return kept


def write_osm_xml(nodes: list[RawNode], ways: list[RawWay]) -> bytes:
    """Canonical OSM XML serialization of parsed content.

    Element order and tag order are preserved, attributes are emitted in a
    fixed order, and coordinates use the 1e-7 degree grid, so
    parse -> write -> parse is the identity.
    """
    out = ['<?xml version="1.0" encoding="UTF-8"?>\n<osm version="0.6">\n']
    for n in nodes:
        head = f'  <node id="{n.id}" lat="{n.location.lat:.7f}" lon="{n.location.lon:.7f}"'
        if n.tags:
            out.append(head + ">\n")
            for k, v in n.tags.items():
                out.append(f"    <tag k={quoteattr(k)} v={quoteattr(v)}/>\n")
            out.append("  </node>\n")
        else:
            out.append(head + "/>\n")
    for w in ways:
        out.append(f'  <way id="{w.id}">\n')
        for ref in w.node_refs:
            out.append(f'    <nd ref="{ref}"/>\n')
        for k, v in w.tags.items():
            out.append(f"    <tag k={quoteattr(k)} v={quoteattr(v)}/>\n")
        out.append("  </way>\n")
    out.append("</osm>\n")
    return "".join(out).encode("utf-8")
