"""Scale/zoom arithmetic, Web-Mercator projection, and bounding boxes.

Everything works in EPSG:3857 meters. The zoom estimate for a map scale
1:d is ``round_half_up(ALPHA - log2(d))`` clamped to [0, 22]; ALPHA was
calibrated against archival map renderings and defaults to 28.1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6378137.0
WORLD_EXTENT_M = math.pi * EARTH_RADIUS_M  # 20037508.342789244
MAX_LATITUDE_DEG = 85.0511287798066  # atan(sinh(pi)), Web-Mercator validity band
BASE_RESOLUTION = 2 * math.pi * EARTH_RADIUS_M / 256  # m/px of the z=0 world tile

ALPHA = 28.1
MAX_ZOOM = 22


class GeodataError(ValueError):
    pass


class InvalidScaleError(GeodataError):
    pass


class OutOfBandError(GeodataError):
    pass


@dataclass(frozen=True)
class MapScale:
    """A map scale 1:denominator."""

    denominator: float

    def __post_init__(self):
        d = self.denominator
        if not (isinstance(d, (int, float)) and math.isfinite(d) and d > 0):
            raise InvalidScaleError(f"scale denominator must be finite and positive, got {d!r}")


@dataclass(frozen=True)
class ZoomLevel:
    z: int

    def __post_init__(self):
        if not (0 <= self.z <= MAX_ZOOM):
            raise GeodataError(f"zoom must be in [0, {MAX_ZOOM}], got {self.z}")

    def __int__(self) -> int:
        return self.z


@dataclass(frozen=True)
class GeoPoint:
    """Geographic coordinates in degrees, inside the Web-Mercator band."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0):
            raise OutOfBandError(f"longitude {self.lon} outside [-180, 180]")
        if not (abs(self.lat) <= MAX_LATITUDE_DEG):
            raise OutOfBandError(f"latitude {self.lat} outside +/-{MAX_LATITUDE_DEG}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in EPSG:3857 meters."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise GeodataError(f"degenerate bbox {self}")
        lim = WORLD_EXTENT_M * (1 + 1e-12)
        for v in (self.min_x, self.min_y, self.max_x, self.max_y):
            if abs(v) > lim:
                raise GeodataError(f"bbox coordinate {v} outside world extent")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def intersects(self, other: "BBox") -> bool:
        return not (
            other.min_x > self.max_x
            or other.max_x < self.min_x
            or other.min_y > self.max_y
            or other.max_y < self.min_y
        )


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def scale_to_zoom(scale: MapScale, alpha: float = ALPHA) -> ZoomLevel:
    """Approximate the slippy-map zoom that renders like a 1:d paper map.

    z = alpha - log2(d), rounded half-up and clamped to [0, 22].
    """
    if not isinstance(scale, MapScale):
        scale = MapScale(float(scale))
    z = round_half_up(alpha - math.log2(scale.denominator))
    return ZoomLevel(min(MAX_ZOOM, max(0, z)))


def lonlat_to_mercator(p: GeoPoint) -> tuple[float, float]:
    """Project WGS84 degrees to EPSG:3857 meters.

    y uses atanh(sin(lat)), the numerically stable identity of
    ln(tan(pi/4 + lat/2)); it is exact at the equator.
    """
    x = EARTH_RADIUS_M * math.radians(p.lon)
    y = EARTH_RADIUS_M * math.atanh(math.sin(math.radians(p.lat)))
    return x, y


def mercator_to_lonlat(x: float, y: float) -> GeoPoint:
    """Inverse of :func:`lonlat_to_mercator`."""
    lon = math.degrees(x / EARTH_RADIUS_M)
    lat = math.degrees(math.asin(math.tanh(y / EARTH_RADIUS_M)))
    # one float rounding can overshoot the band edges by ~1e-13 degrees
    lon = min(180.0, max(-180.0, lon))
    lat = min(MAX_LATITUDE_DEG, max(-MAX_LATITUDE_DEG, lat))
    return GeoPoint(lon=lon, lat=lat)


def ground_resolution(zoom: ZoomLevel | int) -> float:
    """Meters per pixel at the equator for a 256-px tile pyramid."""
    return BASE_RESOLUTION / (2 ** int(zoom))


def bbox_for(center: GeoPoint, zoom: ZoomLevel | int, width_px: int, height_px: int) -> BBox:
    """Box of width_px x height_px pixels centered on a point at a zoom.

    Clamped to the world extent; dpi never enters here, it is image
    metadata only.
    """
    if width_px <= 0 or height_px <= 0:
        raise GeodataError("pixel dimensions must be positive")
    res = ground_resolution(zoom)
    cx, cy = lonlat_to_mercator(center)
    half_w = width_px * res / 2
    half_h = height_px * res / 2
    return BBox(
        min_x=max(-WORLD_EXTENT_M, cx - half_w),
        min_y=max(-WORLD_EXTENT_M, cy - half_h),
        max_x=min(WORLD_EXTENT_M, cx + half_w),
        max_y=min(WORLD_EXTENT_M, cy + half_h),
    )
