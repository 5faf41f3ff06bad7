"""Rasterize vector features into the template label mask.

Fill rule: a pixel belongs to a polygon iff its center is inside under
even-odd crossing counting (holes come free). Strokes are capsules: a
pixel is on a line iff its center lies within half the stroke width of
any segment, which gives round caps and joins. Paint order is fixed,
back to front: background, non-built, water, built, road network,
boundary; later classes overwrite earlier ones.
"""

from __future__ import annotations

import logging
import math
from typing import Mapping

import numpy as np

from .classes import LabelMask, SemanticClass
from .features import VectorFeatureSet, geom_paths, geom_points, geom_polygons
from .geodata import BBox

logger = logging.getLogger(__name__)

PAINT_ORDER = (
    SemanticClass.NON_BUILT,
    SemanticClass.WATER,
    SemanticClass.BUILT,
    SemanticClass.ROAD_NETWORK,
    SemanticClass.BOUNDARY,
)

DEFAULT_LINE_WIDTHS: dict[SemanticClass, float] = {
    SemanticClass.BOUNDARY: 2.0,
    SemanticClass.WATER: 3.0,
    SemanticClass.ROAD_NETWORK: 3.0,
    SemanticClass.BUILT: 7.0,  # point-symbol diameter for city/town dots
    SemanticClass.NON_BUILT: 3.0,
}


def world_to_pixel(coords: np.ndarray, bbox: BBox, width_px: int, height_px: int) -> np.ndarray:
    """EPSG:3857 (n,2) meters -> (n,2) float pixel coords (x right, y down)."""
    coords = np.asarray(coords, dtype=np.float64)
    sx = width_px / bbox.width
    sy = height_px / bbox.height
    out = np.empty_like(coords)
    out[:, 0] = (coords[:, 0] - bbox.min_x) * sx
    out[:, 1] = (bbox.max_y - coords[:, 1]) * sy
    return out


def ring_area(ring: np.ndarray) -> float:
    """Signed shoelace area of a closed or open ring in pixel coords."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def fill_polygon(target: np.ndarray, rings: list[np.ndarray], value: int) -> None:
    """Even-odd scanline fill of a multi-ring polygon, in place."""
    h, w = target.shape
    edges = []
    for ring in rings:
        pts = np.asarray(ring, dtype=np.float64)
        if len(pts) and not np.array_equal(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        for i in range(len(pts) - 1):
            edges.append((pts[i], pts[i + 1]))
    if not edges:
        return
    e = np.asarray([[p[0], p[1], q[0], q[1]] for p, q in edges])
    x1, y1, x2, y2 = e[:, 0], e[:, 1], e[:, 2], e[:, 3]
    keep = y1 != y2
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    if x1.size == 0:
        return
    ylo = np.minimum(y1, y2)
    yhi = np.maximum(y1, y2)
    row_min = max(0, int(math.floor(ylo.min() - 0.5)))
    row_max = min(h - 1, int(math.ceil(yhi.max())))
    for row in range(row_min, row_max + 1):
        yc = row + 0.5
        hit = (ylo <= yc) & (yc < yhi)  # half-open: vertices counted once
        if not hit.any():
            continue
        xs = x1[hit] + (yc - y1[hit]) * (x2[hit] - x1[hit]) / (y2[hit] - y1[hit])
        xs.sort()
        for k in range(0, len(xs) - 1, 2):
            a = int(math.ceil(xs[k] - 0.5))
            b = int(math.ceil(xs[k + 1] - 0.5))
            if b > a:
                target[row, max(0, a):min(w, b)] = value


_STROKE_CHUNK = 48.0  # split long segments so the distance window stays local


def _stamp_capsule(target: np.ndarray, p: np.ndarray, q: np.ndarray, r: float, value: int) -> None:
    h, w = target.shape
    x0 = max(0, int(math.floor(min(p[0], q[0]) - r - 1)))
    x1 = min(w - 1, int(math.ceil(max(p[0], q[0]) + r + 1)))
    y0 = max(0, int(math.floor(min(p[1], q[1]) - r - 1)))
    y1 = min(h - 1, int(math.ceil(max(p[1], q[1]) + r + 1)))
    if x1 < x0 or y1 < y0:
        return
    d = q - p
    seg_len2 = float(d @ d)
    cy = (np.arange(y0, y1 + 1) + 0.5 - p[1])[:, None]
    cx = (np.arange(x0, x1 + 1) + 0.5 - p[0])[None, :]
    if seg_len2 < 1e-24:
        dist2 = cx * cx + cy * cy
    else:
        t = np.clip((cx * d[0] + cy * d[1]) / seg_len2, 0.0, 1.0)
        dist2 = (cx - t * d[0]) ** 2 + (cy - t * d[1]) ** 2
    sel = dist2 <= r * r
    target[y0:y1 + 1, x0:x1 + 1][sel] = value


def stroke_path(target: np.ndarray, path: np.ndarray, width: float, value: int) -> None:
    """Stamp a capsule of `width` pixels around each polyline segment, in place.

    Segments are subdivided into short chunks; the union of chunk
    capsules equals the full segment capsule, so results are identical
    to the brute-force point-to-segment test.
    """
    r = max(width, 0.0) / 2.0
    pts = np.asarray(path, dtype=np.float64)
    for i in range(len(pts) - 1):
        p, q = pts[i], pts[i + 1]
        n_chunks = max(1, int(math.ceil(math.hypot(*(q - p)) / _STROKE_CHUNK)))
        for k in range(n_chunks):
            a = p + (q - p) * (k / n_chunks)
            b = p + (q - p) * ((k + 1) / n_chunks)
            _stamp_capsule(target, a, b, r, value)


def stamp_disc(target: np.ndarray, center: tuple[float, float], radius: float, value: int) -> None:
    stroke_path(target, np.asarray([center, center]), 2 * radius, value)


def path_length(path: np.ndarray) -> float:
    d = np.diff(np.asarray(path, dtype=np.float64), axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def rasterize_template(
    fset: VectorFeatureSet,
    bbox: BBox,
    width_px: int,
    height_px: int,
    line_widths: Mapping[SemanticClass, float] | None = None,
) -> LabelMask:
    """Paint the feature set into a fresh label mask.

    Degenerate geometries (zero-length lines, zero-area polygons) are
    skipped and counted in a single warning, never raised.
    """
    widths = dict(DEFAULT_LINE_WIDTHS)
    if line_widths:
        widths.update({SemanticClass(k): float(v) for k, v in line_widths.items()})
    mask = np.zeros((height_px, width_px), dtype=np.uint8)
    skipped = 0
    for cls in PAINT_ORDER:
        for feat in fset.features:
            if feat.semantic_class != cls:
                continue
            gtype = feat.geom_type
            if gtype == "Polygon":
                for rings in geom_polygons(feat.geometry):
                    px_rings = [world_to_pixel(r, bbox, width_px, height_px) for r in rings]
                    if len(px_rings[0]) < 3 or abs(ring_area(px_rings[0])) < 1e-12:
                        skipped += 1
                        continue
                    fill_polygon(mask, px_rings, int(cls))
            elif gtype == "LineString":
                for path in geom_paths(feat.geometry):
                    px = world_to_pixel(path, bbox, width_px, height_px)
                    if len(px) < 2 or path_length(px) < 1e-12:
                        skipped += 1
                        continue
                    stroke_path(mask, px, widths[cls], int(cls))
            elif gtype == "Point":
                for pt in geom_points(feat.geometry):
                    px = world_to_pixel(np.asarray([pt]), bbox, width_px, height_px)[0]
                    stamp_disc(mask, (px[0], px[1]), widths[cls] / 2.0, int(cls))
    if skipped:
        logger.warning("rasterize_template: skipped %d degenerate geometries", skipped)
    return LabelMask.from_array(mask)
