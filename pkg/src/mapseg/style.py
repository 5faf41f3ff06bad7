"""Probabilistic stylization of template masks into plausible map images.

Each class region draws one graphical process (plain fill, dotted
pattern, hatching, waterlines, procedural texture, or icon sprites),
colored from the per-class mixture model. Rendering is strictly
label-preserving: marks never leave their region, and the template is
only read. A final rescale pass smooths hard edges the way print
digitization would.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np
from PIL import Image
from scipy import ndimage

from .classes import SemanticClass, mask_data
from .colors import ColorModel, sample_color
from .rasterize import stroke_path

PROCESSES = ("plain", "dots", "hatching", "waterlines", "texture", "icons")

TEXTURE_KINDS = (
    "stipple", "stipple_coarse", "grain", "grain_fine",
    "wash", "wash_bands", "crosshatch", "crosshatch_dense",
)

_DEFAULT_PROCESS_WEIGHTS: dict[int, dict[str, float]] = {
    0: {"plain": 1.0},  # paper canvas stays flat; spots/JPEG add the aging
    1: {"plain": 1.0},
    2: {"plain": 0.5, "hatching": 0.2, "dots": 0.1, "texture": 0.1, "icons": 0.1},
    3: {"plain": 0.4, "dots": 0.2, "texture": 0.2, "icons": 0.15, "hatching": 0.05},
    4: {"plain": 0.45, "waterlines": 0.3, "hatching": 0.2, "texture": 0.05},
    5: {"plain": 0.9, "texture": 0.1},
}

_DEFAULT_RELIEF_WEIGHTS = {"none": 0.55, "hillshade": 0.2, "isolines": 0.15, "hachure": 0.1}

_DEFAULT_LINE_WIDTH_RANGES: dict[int, tuple[float, float]] = {
    int(SemanticClass.BOUNDARY): (1.5, 3.5),
    int(SemanticClass.WATER): (2.0, 6.0),
    int(SemanticClass.ROAD_NETWORK): (2.0, 5.0),
    int(SemanticClass.BUILT): (5.0, 9.0),  # point-symbol diameter
}


@dataclass
class StyleConfig:
    """Knobs for stylization, annotation, and degradation."""

    process_weights: dict[int, dict[str, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in _DEFAULT_PROCESS_WEIGHTS.items()})
    grayscale_prob: float = 0.15
    jpeg_quality_range: tuple[int, int] = (50, 92)
    frame_crop_prob: float = 0.5
    dark_spot_count: tuple[int, int] = (0, 6)
    dark_spot_radius: tuple[float, float] = (20.0, 120.0)
    dark_spot_opacity: tuple[float, float] = (0.05, 0.2)
    line_width_ranges: dict[int, tuple[float, float]] = field(
        default_factory=lambda: {k: tuple(v) for k, v in _DEFAULT_LINE_WIDTH_RANGES.items()})
    relief_mode_weights: dict[str, float] = field(default_factory=lambda: dict(_DEFAULT_RELIEF_WEIGHTS))
    graticule_prob: float = 0.25
    graticule_spacing: tuple[float, float] = (60.0, 200.0)
    label_density: float = 6.0
    label_size_range: tuple[int, int] = (10, 34)
    waterline_spacing: tuple[float, float] = (3.0, 7.0)
    waterline_bands: tuple[int, int] = (3, 6)
    isoline_interval: tuple[float, float] = (15.0, 40.0)
    isoline_width: tuple[float, float] = (1.0, 2.5)
    hillshade_azimuth: float = 315.0
    hillshade_altitude: float = 45.0
    hillshade_strength: float = 0.45
    seed: int = 0

    def __post_init__(self):
        for name in ("grayscale_prob", "frame_crop_prob", "graticule_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be a probability, got {p}")
        self.process_weights = {int(k): dict(v) for k, v in self.process_weights.items()}
        for cls, dist in self.process_weights.items():
            total = 0.0
            for proc, w in dist.items():
                if proc not in PROCESSES:
                    raise ValueError(f"unknown process {proc!r} for class {cls}")
                if w < 0:
                    raise ValueError(f"negative weight for {proc!r}")
                total += w
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"process weights for class {cls} sum to {total}, expected 1")
        total = sum(self.relief_mode_weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"relief mode weights sum to {total}, expected 1")
        self.line_width_ranges = {int(k): (float(v[0]), float(v[1])) for k, v in self.line_width_ranges.items()}

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            elif isinstance(v, dict):
                v = {str(k): (list(x) if isinstance(x, tuple) else x) for k, x in v.items()}
            out[f.name] = v
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "StyleConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown style config keys: {sorted(unknown)}")
        kw = dict(obj)
        for name in ("jpeg_quality_range", "dark_spot_count", "dark_spot_radius", "dark_spot_opacity",
                     "graticule_spacing", "label_size_range", "waterline_spacing", "waterline_bands",
                     "isoline_interval", "isoline_width"):
            if name in kw:
                kw[name] = tuple(kw[name])
        if "line_width_ranges" in kw:
            kw["line_width_ranges"] = {int(k): tuple(v) for k, v in kw["line_width_ranges"].items()}
        if "process_weights" in kw:
            kw["process_weights"] = {int(k): dict(v) for k, v in kw["process_weights"].items()}
        return cls(**kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Pattern primitives


def hatch_segments(width: float, height: float, angle_rad: float, spacing: float) -> list[np.ndarray]:
    """Parallel stroke segments covering a width x height box.

    Lines run along (cos a, sin a); offsets step `spacing` along the
    normal, phase-centered so the first band sits spacing/2 inside.
    """
    d = np.array([math.cos(angle_rad), math.sin(angle_rad)])
    n = np.array([-math.sin(angle_rad), math.cos(angle_rad)])
    corners = np.array([[0, 0], [width, 0], [0, height], [width, height]], dtype=np.float64)
    proj_n = corners @ n
    proj_d = corners @ d
    t0, t1 = proj_d.min() - 1, proj_d.max() + 1
    segs = []
    for o in np.arange(proj_n.min() + spacing / 2, proj_n.max(), spacing):
        segs.append(np.vstack([o * n + t0 * d, o * n + t1 * d]))
    return segs


def _stable_seed(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


@lru_cache(maxsize=None)
def texture_tile(kind: str, size: int = 64) -> np.ndarray:
    """Deterministic tileable intensity pattern in [0, 1]."""
    rng = np.random.default_rng(_stable_seed(kind))
    if kind.startswith("stipple"):
        density = 0.04 if kind == "stipple" else 0.015
        t = (rng.random((size, size)) < density).astype(np.float64)
        t = ndimage.grey_dilation(t, size=(2, 2))
    elif kind.startswith("grain"):
        sigma = 0.6 if kind == "grain_fine" else 1.2
        t = ndimage.gaussian_filter(rng.random((size, size)), sigma, mode="wrap")
        t = (t - t.min()) / max(np.ptp(t), 1e-12)
        t *= 0.55
    elif kind.startswith("wash"):
        cells = 8 if kind == "wash" else 4
        coarse = rng.random((cells, cells))
        t = np.kron(coarse, np.ones((size // cells, size // cells)))
        t = ndimage.gaussian_filter(t, 3.0, mode="wrap")
        t = (t - t.min()) / max(np.ptp(t), 1e-12)
        t *= 0.4
    elif kind.startswith("crosshatch"):
        period = 6 if kind == "crosshatch_dense" else 10
        yy, xx = np.mgrid[0:size, 0:size]
        a = ((xx + yy) % period) < 1.5
        b = ((xx - yy) % period) < 1.5
        t = (a | b).astype(np.float64) * 0.8
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    return np.clip(t, 0.0, 1.0)


_SPRITE_KINDS = ("tree", "house", "mountain", "wave")


@lru_cache(maxsize=None)
def sprite_bitmap(kind: str, size: int = 11) -> np.ndarray:
    """Tiny map-symbol bitmap (bool), drawn procedurally."""
    c = size // 2
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == "tree":
        crown = (yy - c * 0.8) ** 2 + (xx - c) ** 2 <= (size * 0.32) ** 2
        trunk = (np.abs(xx - c) <= max(1, size // 10)) & (yy >= c)
        s = crown | trunk
    elif kind == "house":
        body = (yy >= c) & (np.abs(xx - c) <= size * 0.3)
        roof = (yy < c) & (np.abs(xx - c) <= (yy / max(c, 1)) * size * 0.38)
        s = body | roof
    elif kind == "mountain":
        s = (np.abs(xx - c) <= (yy / max(size - 1, 1)) * size * 0.45) & (yy >= size * 0.2)
    elif kind == "wave":
        s = np.abs(yy - (c + 2.2 * np.sin(xx * 2 * np.pi / size))) <= 0.9
    else:
        raise ValueError(f"unknown sprite kind {kind!r}")
    return s


_CLASS_SPRITES = {
    int(SemanticClass.BUILT): ("house",),
    int(SemanticClass.NON_BUILT): ("tree", "mountain"),
    int(SemanticClass.WATER): ("wave",),
}


# ---------------------------------------------------------------------------
# Region painters. Each draws only where `region` is True; if the pattern
# cannot be placed the region falls back to a plain fill.


def _mix(color, paper, toward_paper: float) -> np.ndarray:
    c = np.asarray(color, dtype=np.float64)
    p = np.asarray(paper, dtype=np.float64)
    return np.clip(np.rint(c * (1 - toward_paper) + p * toward_paper), 0, 255).astype(np.uint8)


def _apply_marks(canvas, marks, region, color) -> bool:
    sel = marks & region
    if not sel.any():
        return False
    canvas[sel] = color
    return True


def _paint_plain(canvas, region, cls, color, rng, style, paper):
    canvas[region] = color


def _paint_dots(canvas, region, cls, color, rng, style, paper):
    h, w = region.shape
    spacing = int(rng.integers(4, 10))
    radius = float(rng.uniform(0.8, 1.8))
    canvas[region] = _mix(color, paper, 0.72)
    gy, gx = np.mgrid[0:h // spacing + 1, 0:w // spacing + 1]
    cy = (gy * spacing + spacing / 2 + rng.uniform(-1.2, 1.2, gy.shape)).ravel()
    cx = (gx * spacing + spacing / 2 + rng.uniform(-1.2, 1.2, gx.shape)).ravel()
    iy, ix = cy.astype(int), cx.astype(int)
    ok = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    ok[ok] &= region[iy[ok], ix[ok]]
    iy, ix = iy[ok], ix[ok]
    marks = np.zeros((h, w), dtype=bool)
    rr = int(math.ceil(radius))
    for dy in range(-rr, rr + 1):
        for dx in range(-rr, rr + 1):
            if dy * dy + dx * dx > radius * radius:
                continue
            yy = iy + dy
            xx = ix + dx
            inb = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            marks[yy[inb], xx[inb]] = True
    if not _apply_marks(canvas, marks, region, color):
        canvas[region] = color


def _paint_hatching(canvas, region, cls, color, rng, style, paper):
    h, w = region.shape
    angle = float(rng.uniform(0, math.pi))
    spacing = float(rng.uniform(4, 12))
    lw = float(rng.uniform(1.0, 2.0))
    canvas[region] = _mix(color, paper, 0.8)
    marks = np.zeros((h, w), dtype=np.uint8)
    for seg in hatch_segments(w, h, angle, spacing):
        stroke_path(marks, seg, lw, 1)
    if not _apply_marks(canvas, marks.astype(bool), region, color):
        canvas[region] = color


def _paint_waterlines(canvas, region, cls, color, rng, style, paper):
    spacing = float(rng.uniform(*style.waterline_spacing))
    bands = int(rng.integers(style.waterline_bands[0], style.waterline_bands[1] + 1))
    canvas[region] = _mix(color, paper, 0.85)
    dist = ndimage.distance_transform_edt(region)
    marks = region & (np.mod(dist, spacing) < 1.4) & (dist > 0.5) & (dist < bands * spacing)
    if not _apply_marks(canvas, marks, region, color):
        canvas[region] = color


def _paint_texture(canvas, region, cls, color, rng, style, paper):
    h, w = region.shape
    kind = TEXTURE_KINDS[int(rng.integers(len(TEXTURE_KINDS)))]
    tile = texture_tile(kind)
    reps = (h // tile.shape[0] + 1, w // tile.shape[1] + 1)
    t = np.tile(tile, reps)[:h, :w][..., None]
    paper_arr = np.asarray(paper, dtype=np.float64)
    color_arr = np.asarray(color, dtype=np.float64)
    mixed = paper_arr * (1 - t) + color_arr * t
    canvas[region] = np.clip(np.rint(mixed[region]), 0, 255).astype(np.uint8)


def _paint_icons(canvas, region, cls, color, rng, style, paper):
    h, w = region.shape
    kinds = _CLASS_SPRITES.get(int(cls))
    canvas[region] = _mix(color, paper, 0.78)
    if kinds is None:
        canvas[region] = color
        return
    spacing = int(rng.integers(12, 24))
    size = int(rng.integers(9, 15))
    marks = np.zeros((h, w), dtype=bool)
    jitter = rng.uniform(-spacing * 0.25, spacing * 0.25, size=(2, h // spacing + 2, w // spacing + 2))
    for gy in range(0, h // spacing + 1):
        for gx in range(0, w // spacing + 1):
            kind = kinds[(gy + gx) % len(kinds)]
            sp = sprite_bitmap(kind, size)
            y0 = int(gy * spacing + jitter[0, gy, gx])
            x0 = int(gx * spacing + jitter[1, gy, gx])
            if y0 < 0 or x0 < 0 or y0 + size > h or x0 + size > w:
                continue
            if not region[y0:y0 + size, x0:x0 + size][sp].all():
                continue
            marks[y0:y0 + size, x0:x0 + size] |= sp
    if not _apply_marks(canvas, marks, region, color):
        canvas[region] = color


_PAINTERS = {
    "plain": _paint_plain,
    "dots": _paint_dots,
    "hatching": _paint_hatching,
    "waterlines": _paint_waterlines,
    "texture": _paint_texture,
    "icons": _paint_icons,
}


# ---------------------------------------------------------------------------


def antialias_pass(image: np.ndarray) -> np.ndarray:
    """Rescale up and back down to soften rasterized edges."""
    h, w = image.shape[:2]
    img = Image.fromarray(image)
    soft = img.resize((w * 2, h * 2), Image.BILINEAR).resize((w, h), Image.BILINEAR)
    return np.asarray(soft, dtype=np.uint8)


def stylize(
    template,
    features,
    style: StyleConfig,
    colors: ColorModel,
    rng: np.random.Generator,
    antialias: bool = True,
) -> np.ndarray:
    """Render a template mask to an RGB image; the mask itself is only read.

    `features` is accepted for geometry-aware processes; the current
    painters work from the rasterized regions alone.
    """
    mask = mask_data(template)
    h, w = mask.shape
    paper = sample_color(colors, SemanticClass.BACKGROUND, rng)
    canvas = np.empty((h, w, 3), dtype=np.uint8)
    canvas[:] = paper

    for cls in range(6):
        region = mask == cls
        if not region.any():
            continue
        dist = style.process_weights.get(cls, {"plain": 1.0})
        names = sorted(dist)
        probs = np.asarray([dist[n] for n in names], dtype=np.float64)
        process = names[int(rng.choice(len(names), p=probs / probs.sum()))]
        color = paper if cls == 0 else sample_color(colors, cls, rng)
        _PAINTERS[process](canvas, region, cls, color, rng, style, paper)

    if antialias:
        canvas = antialias_pass(canvas)
    return canvas
