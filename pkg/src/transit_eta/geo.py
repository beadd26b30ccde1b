"""Distances on the sphere and progress along straight stop-to-stop segments."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateSegment

EARTH_RADIUS_M = 6_371_000.0
DEGENERATE_SEGMENT_M = 1.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range")


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius ``EARTH_RADIUS_M``."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def local_xy(p: GeoPoint, origin: GeoPoint) -> tuple[float, float]:
    """Equirectangular offset of ``p`` from ``origin`` in meters (east, north)."""
    k = math.radians(1.0) * EARTH_RADIUS_M
    x = (p.lon - origin.lon) * k * math.cos(math.radians(origin.lat))
    y = (p.lat - origin.lat) * k
    return x, y


def project_onto_segment(p: GeoPoint, seg_start: GeoPoint, seg_end: GeoPoint) -> tuple[float, float]:
    """Return ``(fraction, distance_m)`` of the orthogonal projection of ``p``.

    The fraction is clamped to [0, 1]; the distance is measured from ``p`` to
    the clamped foot point in the local plane centered at ``seg_start``.
    """
    ex, ey = local_xy(seg_end, seg_start)
    length2 = ex * ex + ey * ey
    if length2 < DEGENERATE_SEGMENT_M**2:
        raise DegenerateSegment(
            f"segment endpoints {seg_start} and {seg_end} are closer than {DEGENERATE_SEGMENT_M} m"
        )
    px, py = local_xy(p, seg_start)
    t = (px * ex + py * ey) / length2
    t = min(1.0, max(0.0, t))
    return t, math.hypot(px - t * ex, py - t * ey)


def segment_progress(p: GeoPoint, seg_start: GeoPoint, seg_end: GeoPoint) -> float:
    """Fraction in [0, 1] of the way from ``seg_start`` to ``seg_end`` reached by ``p``."""
    return project_onto_segment(p, seg_start, seg_end)[0]


def interpolate(a: GeoPoint, b: GeoPoint, fraction: float) -> GeoPoint:
    """Point at ``fraction`` along the straight line from ``a`` to ``b`` (lat/lon linear)."""
    return GeoPoint(a.lat + fraction * (b.lat - a.lat), a.lon + fraction * (b.lon - a.lon))


def offset(p: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    """Move ``p`` by a local displacement in meters."""
    k = math.radians(1.0) * EARTH_RADIUS_M
    return GeoPoint(p.lat + north_m / k, p.lon + east_m / (k * math.cos(math.radians(p.lat))))
