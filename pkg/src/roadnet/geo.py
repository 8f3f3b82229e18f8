"""Geodesic primitives: points, boxes, great-circle distances.

All angles are WGS84 degrees, all distances meters on a sphere of radius
EARTH_RADIUS_M. Coordinates are quantized to 1e-7 degrees at construction
(the native resolution of OSM), so equality between points is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_008.8  # IUGG mean radius

# 1e-7 degrees, OSM's native coordinate resolution.
COORD_QUANTUM = 1e-7


def quantize(deg: float) -> float:
    """Round a coordinate to the 1e-7 degree grid."""
    return round(deg * 1e7) / 1e7


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lon = self.lon
        if not (-180.0 <= lon < 180.0):
            lon = math.fmod(lon + 180.0, 360.0)
            if lon < 0.0:
                lon += 360.0
            lon -= 180.0
        lat = quantize(self.lat)
        lon = quantize(lon)
        if not (-90.0 <= lat <= 90.0):
            raise ValueError(f"latitude {self.lat!r} outside [-90, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class BBox:
    """Closed latitude/longitude box. Antimeridian-crossing boxes are
    rejected; issue two boxes instead."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        if not (-90.0 <= self.min_lat <= self.max_lat <= 90.0):
            raise ValueError("latitude bounds must satisfy -90 <= min <= max <= 90")
        if not (-180.0 <= self.min_lon <= self.max_lon <= 180.0):
            raise ValueError(
                "longitude bounds must satisfy -180 <= min <= max <= 180 "
                "(antimeridian-crossing boxes are not supported)"
            )


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def polyline_length(points) -> float:
    """Sum of consecutive great-circle segment lengths, in meters.

    A single point has length 0; an empty sequence is an error.
    """
    pts = list(points)
    if not pts:
        raise ValueError("polyline_length: empty point list")
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        total += haversine_distance(a, b)
    return total


def bbox_contains(box: BBox, p: GeoPoint) -> bool:
    return (
        box.min_lat <= p.lat <= box.max_lat
        and box.min_lon <= p.lon <= box.max_lon
    )
