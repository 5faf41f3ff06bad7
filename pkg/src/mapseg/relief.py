"""Relief depiction: Horn hillshading, contour isolines, hachures.

Elevation grids are single-channel 16-bit PNGs with a JSON sidecar
carrying {bbox, nodata} (local stand-ins for a terrain tile service).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from skimage.measure import find_contours

from .geodata import BBox

DEFAULT_AZIMUTH_DEG = 315.0
DEFAULT_ALTITUDE_DEG = 45.0

RELIEF_MODES = ("none", "hachure", "hillshade", "isolines")


class ReliefError(ValueError):
    pass


@dataclass
class ElevationGrid:
    """Row-major elevation in meters; `nodata` marks invalid cells."""

    values: np.ndarray
    cell_size: float
    nodata: float = -9999.0
    bbox: BBox | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ReliefError("elevation grid must be 2-D")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        v = self.values
        return np.isfinite(v) & (v != self.nodata)

    def save_png16(self, path, offset: float = 0.0, scale: float = 0.1) -> None:
        """Quantize to uint16 as (v - offset)/scale; nodata maps to 65535."""
        valid = self.valid_mask()
        q = np.full(self.values.shape, 65535, dtype=np.uint16)
        q[valid] = np.clip(np.rint((self.values[valid] - offset) / scale), 0, 65534).astype(np.uint16)
        Image.fromarray(q).save(path, format="PNG")
        sidecar = {
            "bbox": [self.bbox.min_x, self.bbox.min_y, self.bbox.max_x, self.bbox.max_y] if self.bbox else None,
            "nodata": self.nodata,
            "offset": offset,
            "scale": scale,
            "cell_size": self.cell_size,
        }
        Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True), encoding="utf-8")

    @classmethod
    def load_png16(cls, path) -> "ElevationGrid":
        side = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
        q = np.asarray(Image.open(path), dtype=np.uint16)
        values = side["offset"] + q.astype(np.float64) * side["scale"]
        values[q == 65535] = side["nodata"]
        bbox = BBox(*side["bbox"]) if side.get("bbox") else None
        return cls(values=values, cell_size=side["cell_size"], nodata=side["nodata"], bbox=bbox)


@dataclass
class ReliefLayer:
    """Grayscale multiplier in [0,1] and/or polylines in pixel coords."""

    shade: np.ndarray | None = None
    polylines: list[np.ndarray] | None = None


def _filled(grid: ElevationGrid) -> np.ndarray:
    """Grid values with nodata replaced by the valid mean (for gradients)."""
    valid = grid.valid_mask()
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ReliefError("elevation grid has no valid cells")
    if n_valid < 4:
        raise ReliefError("elevation grid needs at least a 2x2 block of valid cells")
    v = grid.values.copy()
    v[~valid] = v[valid].mean()
    return v


def horn_gradients(values: np.ndarray, cell_size: float) -> tuple[np.ndarray, np.ndarray]:
    """dz/dx, dz/dy from the 3x3 weighted-difference stencil (edge-padded)."""
    z = np.pad(values, 1, mode="edge")
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, hh, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    dzdx = ((c + 2 * f + i) - (a + 2 * d + g)) / (8 * cell_size)
    dzdy = ((g + 2 * hh + i) - (a + 2 * b + c)) / (8 * cell_size)
    return dzdx, dzdy


def hillshade(
    grid: ElevationGrid,
    azimuth_deg: float = DEFAULT_AZIMUTH_DEG,
    altitude_deg: float = DEFAULT_ALTITUDE_DEG,
) -> np.ndarray:
    """Illumination in [0, 1]; azimuth clockwise from north, sun altitude above horizon."""
    v = _filled(grid)
    dzdx, dzdy = horn_gradients(v, grid.cell_size)
    zenith = math.radians(90.0 - altitude_deg)
    az = math.radians((360.0 - azimuth_deg + 90.0) % 360.0)
    slope = np.arctan(np.hypot(dzdx, dzdy))
    aspect = np.arctan2(dzdy, -dzdx)
    shade = np.cos(zenith) * np.cos(slope) + np.sin(zenith) * np.sin(slope) * np.cos(az - aspect)
    return np.clip(shade, 0.0, 1.0)


def isolines(grid: ElevationGrid, interval: float) -> list[np.ndarray]:
    """Contour polylines ((n,2) arrays of x,y pixel coords) every `interval` meters."""
    if interval <= 0:
        raise ReliefError("contour interval must be positive")
    v = _filled(grid)
    lo, hi = v.min(), v.max()
    lines: list[np.ndarray] = []
    level = math.floor(lo / interval) * interval + interval
    while level < hi:
        for contour in find_contours(v, level):
            lines.append(contour[:, ::-1].copy())  # (row, col) -> (x, y)
        level += interval
    return lines


def hachures(
    grid: ElevationGrid,
    rng: np.random.Generator,
    stride: int = 6,
    density: float = 0.55,
    length: float | None = None,
    min_slope: float = 0.02,
) -> list[np.ndarray]:
    """Short downslope strokes on a strided lattice; steeper means denser."""
    v = _filled(grid)
    dzdx, dzdy = horn_gradients(v, grid.cell_size)
    slope = np.hypot(dzdx, dzdy)
    top = slope.max()
    if top <= 0:
        return []
    ys, xs = np.mgrid[stride // 2:v.shape[0]:stride, stride // 2:v.shape[1]:stride]
    ys, xs = ys.ravel(), xs.ravel()
    s = slope[ys, xs]
    keep = (s >= min_slope) & (rng.random(len(ys)) < density * s / top)
    ys, xs, s = ys[keep], xs[keep], s[keep]
    gx, gy = dzdx[ys, xs], dzdy[ys, xs]
    norm = np.hypot(gx, gy)
    # downslope direction is -gradient; +y points down in pixel space
    dx, dy = -gx / norm, -gy / norm
    half = (length if length is not None else stride * 1.2) / 2.0
    jitter = rng.uniform(-stride * 0.3, stride * 0.3, size=(2, len(ys)))
    cx = xs + 0.5 + jitter[0]
    cy = ys + 0.5 + jitter[1]
    return [
        np.asarray([[cx[i] - dx[i] * half, cy[i] - dy[i] * half],
                    [cx[i] + dx[i] * half, cy[i] + dy[i] * half]])
        for i in range(len(ys))
    ]


def render_relief(grid: ElevationGrid, mode: str, rng: np.random.Generator | None = None, **params) -> ReliefLayer:
    """Dispatch to one of the three relief processes (or none)."""
    if mode == "none":
        return ReliefLayer()
    if mode == "hillshade":
        return ReliefLayer(shade=hillshade(grid, **params))
    if mode == "isolines":
        return ReliefLayer(polylines=isolines(grid, params.get("interval", 25.0)))
    if mode == "hachure":
        if rng is None:
            rng = np.random.default_rng(0)
        return ReliefLayer(polylines=hachures(grid, rng, **{k: v for k, v in params.items() if k != "interval"}))
    raise ReliefError(f"unknown relief mode {mode!r}")


def resample_grid(grid: ElevationGrid, width: int, height: int) -> ElevationGrid:
    """Bilinear resample to a target raster size (nodata filled first)."""
    v = _filled(grid)
    img = Image.fromarray(v.astype(np.float32), mode="F").resize((width, height), Image.BILINEAR)
    scale = grid.width / width
    return ElevationGrid(
        values=np.asarray(img, dtype=np.float64),
        cell_size=grid.cell_size * scale,
        nodata=grid.nodata,
        bbox=grid.bbox,
    )
