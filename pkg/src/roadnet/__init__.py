"""Road-network processing: OSM ingest, graph build, spatial queries,
density analytics, boundary detection, and simulator/traffic exports.

The hot query kernels have a compiled extension and a pure-numpy fallback;
`roadnet._kernels.BACKEND` names the one in use (ROADNET_KERNELS overrides).
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .geo import BBox, GeoPoint, haversine_distance, polyline_length
from .graphbuild import RoadGraph, SplitEdge, Vertex, build_graph
from .osmxml import RoadClass, parse_osm_xml

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "GeoPoint",
    "KERNEL_BACKEND",
    "RoadClass",
    "RoadGraph",
    "SplitEdge",
    "Vertex",
    "build_graph",
    "haversine_distance",
    "parse_osm_xml",
    "polyline_length",
    "__version__",
]
