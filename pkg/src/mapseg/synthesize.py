"""End-to-end synthetic sample generation.

Pipeline per sample: pick a scene, draw a map scale and window, filter
features for the zoom, rasterize the template, stylize, add relief,
annotate, degrade. Every random decision flows from the sample seed
through named substreams, so a seed fully determines the output bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .annotate import annotate, load_default_lexicon
from .classes import LabelMask, SemanticClass
from .colors import ColorModel, load_default_color_model
from .features import VectorFeature, clip_to_bbox, filter_features, load_feature_dir
from .fixtures import DemoScene, build_demo_scene
from .geodata import BBox, bbox_for, mercator_to_lonlat, scale_to_zoom
from .degrade import apply_degradations
from .rasterize import rasterize_template, stroke_path
from .relief import ElevationGrid, hillshade, isolines, hachures
from .style import StyleConfig, stylize

DEFAULT_HIDE_PROBS = {"landcover_wood": 0.25}


@dataclass
class GenerationConfig:
    width: int = 768
    height: int = 768
    dpi: int = 300  # recorded in provenance only; geometry is zoom-driven
    scale_range: tuple[float, float] = (15_000.0, 150_000.0)
    alpha: float = 28.1
    features_dir: str | None = None  # None -> procedural demo scenes
    n_demo_scenes: int = 6
    demo_scene_seed: int = 777
    colors_path: str | None = None
    lexicon_path: str | None = None
    hide_probs: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_HIDE_PROBS))
    style: StyleConfig = field(default_factory=StyleConfig)
    image_format: str = "jpeg"  # corpus output: jpeg | png

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["scale_range"] = list(self.scale_range)
        out["style"] = self.style.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GenerationConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown generation config keys: {sorted(unknown)}")
        kw = dict(obj)
        if "scale_range" in kw:
            kw["scale_range"] = tuple(kw["scale_range"])
        if "style" in kw and isinstance(kw["style"], dict):
            kw["style"] = StyleConfig.from_json(kw["style"])
        return cls(**kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass
class SynthSample:
    """A stylized map image, its ground truth, and how it was made.

    `template` is the pre-degradation rasterized mask; `mask` differs
    from it only inside a frame-crop band (set to background).
    """

    image: np.ndarray
    mask: LabelMask
    template: LabelMask
    provenance: dict


class SceneSource:
    """Resolves scenes (vector features + bbox + elevation) for a config."""

    def __init__(self, config: GenerationConfig):
        self._config = config
        self._cache: dict[int, DemoScene] = {}
        if config.features_dir is not None:
            self._names = sorted(load_feature_dir(config.features_dir))
        else:
            self._names = [f"scene_{config.demo_scene_seed + i:04d}" for i in range(config.n_demo_scenes)]

    def __len__(self) -> int:
        return len(self._names)

    def get(self, index: int) -> DemoScene:
        if index in self._cache:
            return self._cache[index]
        cfg = self._config
        if cfg.features_dir is None:
            scene = build_demo_scene(cfg.demo_scene_seed + index)
        else:
            scene = _load_scene_dir_entry(Path(cfg.features_dir), self._names[index])
        self._cache[index] = scene
        return scene


def _load_scene_dir_entry(root: Path, name: str) -> DemoScene:
    from .features import load_features, geom_bounds

    feats = load_features(root / f"{name}.ndjson")
    bbox_path = root / f"{name}.bbox.json"
    if bbox_path.exists():
        b = json.loads(bbox_path.read_text(encoding="utf-8"))
        bbox = BBox(b["min_x"], b["min_y"], b["max_x"], b["max_y"])
    else:
        bounds = np.array([geom_bounds(f.geometry) for f in feats])
        bbox = BBox(bounds[:, 0].min(), bounds[:, 1].min(), bounds[:, 2].max(), bounds[:, 3].max())
    elev_path = root / f"{name}.elevation.png"
    elevation = ElevationGrid.load_png16(elev_path) if elev_path.exists() else None
    if elevation is not None and elevation.bbox is None:
        elevation.bbox = bbox
    return DemoScene(name=name, features=feats, bbox=bbox, elevation=elevation)


def _window_elevation(dem: ElevationGrid, window: BBox, out_w: int, out_h: int) -> ElevationGrid:
    """Bilinear sample of the scene DEM over a window, one cell per pixel."""
    csx = dem.bbox.width / dem.width
    csy = dem.bbox.height / dem.height
    xs = window.min_x + (np.arange(out_w) + 0.5) * (window.width / out_w)
    ys = window.max_y - (np.arange(out_h) + 0.5) * (window.height / out_h)
    cols = (xs - dem.bbox.min_x) / csx - 0.5
    rows = (dem.bbox.max_y - ys) / csy - 0.5
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    vals = ndimage.map_coordinates(dem.values, [grid_r, grid_c], order=1, mode="nearest")
    return ElevationGrid(values=vals, cell_size=window.width / out_w, nodata=dem.nodata, bbox=window)


def _apply_relief(image: np.ndarray, mode: str, dem: ElevationGrid, window: BBox,
                  style: StyleConfig, rng: np.random.Generator) -> np.ndarray:
    h, w = image.shape[:2]
    grid = _window_elevation(dem, window, w, h)
    if mode == "hillshade":
        shade = hillshade(grid, style.hillshade_azimuth, style.hillshade_altitude)
        k = style.hillshade_strength
        out = image.astype(np.float64) * (1.0 - k * (1.0 - shade[..., None]))
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    ink = np.array([int(rng.integers(40, 90))] * 3, dtype=np.uint8)
    lw = float(rng.uniform(*style.isoline_width))
    overlay = np.zeros((h, w), dtype=np.uint8)
    if mode == "isolines":
        interval = float(rng.uniform(*style.isoline_interval))
        lines = isolines(grid, interval)
    else:  # hachure
        lines = hachures(grid, rng)
    for line in lines:
        stroke_path(overlay, line, lw, 1)
    out = image.copy()
    out[overlay.astype(bool)] = ink
    return out


def generate_sample(
    config: GenerationConfig,
    seed: int,
    scenes: SceneSource | None = None,
    colors: ColorModel | None = None,
    lexicon: list[str] | None = None,
) -> SynthSample:
    """Generate one image/mask pair; identical seeds give identical bytes."""
    scenes = scenes if scenes is not None else SceneSource(config)
    colors = colors if colors is not None else _resolve_colors(config)
    lexicon = lexicon if lexicon is not None else _resolve_lexicon(config)
    style = config.style

    master = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xC0FFEE)))
    (scene_rng, geom_rng, raster_rng, style_rng,
     relief_rng, annotate_rng, degrade_rng) = master.spawn(7)

    scene = scenes.get(int(scene_rng.integers(len(scenes))))

    lo, hi = config.scale_range
    denom = math.exp(geom_rng.uniform(math.log(lo), math.log(hi)))
    zoom = scale_to_zoom(denom, alpha=config.alpha)
    from .geodata import ground_resolution

    half_w = config.width * ground_resolution(zoom) / 2
    half_h = config.height * ground_resolution(zoom) / 2
    cx_lo, cx_hi = scene.bbox.min_x + half_w, scene.bbox.max_x - half_w
    cy_lo, cy_hi = scene.bbox.min_y + half_h, scene.bbox.max_y - half_h
    cx = geom_rng.uniform(min(cx_lo, cx_hi), max(cx_lo, cx_hi))
    cy = geom_rng.uniform(min(cy_lo, cy_hi), max(cy_lo, cy_hi))
    window = bbox_for(mercator_to_lonlat(cx, cy), zoom, config.width, config.height)

    visible = clip_to_bbox(scene.features, window, zoom)
    visible = filter_features(visible, zoom, hide_probs=config.hide_probs,
                              seed=int(geom_rng.integers(2 ** 63)))

    line_widths = {
        cls: float(raster_rng.uniform(lo_w, hi_w))
        for cls, (lo_w, hi_w) in style.line_width_ranges.items()
    }
    template = rasterize_template(visible, window, config.width, config.height, line_widths)

    image = stylize(template, visible, style, colors, style_rng)

    modes = sorted(style.relief_mode_weights)
    weights = np.asarray([style.relief_mode_weights[m] for m in modes], dtype=np.float64)
    relief_mode = modes[int(relief_rng.choice(len(modes), p=weights / weights.sum()))]
    if relief_mode != "none" and scene.elevation is not None:
        image = _apply_relief(image, relief_mode, scene.elevation, window, style, relief_rng)

    image = annotate(image, lexicon, style, annotate_rng)

    degraded = apply_degradations(image, style, degrade_rng, mask=template)

    provenance = {
        "bbox": [window.min_x, window.min_y, window.max_x, window.max_y],
        "zoom": int(zoom),
        "seed": int(seed),
        "style_digest": style.digest(),
        "scale_denominator": denom,
        "dpi": config.dpi,
        "scene": scene.name,
        "relief_mode": relief_mode,
        "frame_box": list(degraded.frame_box) if degraded.frame_box else None,
        "grayscaled": degraded.grayscaled,
        "jpeg_quality": degraded.jpeg_quality,
    }
    return SynthSample(image=degraded.image, mask=degraded.mask, template=template,
                       provenance=provenance)


def _resolve_colors(config: GenerationConfig) -> ColorModel:
    if config.colors_path:
        return ColorModel.load(config.colors_path)
    return load_default_color_model()


def _resolve_lexicon(config: GenerationConfig) -> list[str]:
    if config.lexicon_path:
        lines = Path(config.lexicon_path).read_text(encoding="utf-8").splitlines()
        lex = [ln.strip() for ln in lines if ln.strip()]
        if not lex:
            raise ValueError(f"lexicon file {config.lexicon_path} is empty")
        return lex
    return load_default_lexicon()


def save_sample(sample: SynthSample, out_dir, stem: str, image_format: str = "jpeg") -> dict:
    """Write image, mask PNG, and provenance sidecar; returns file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if image_format == "jpeg":
        img_name = f"{stem}.jpg"
        Image.fromarray(sample.image).save(out / img_name, format="JPEG",
                                           quality=int(sample.provenance["jpeg_quality"]))
    elif image_format == "png":
        img_name = f"{stem}.png"
        Image.fromarray(sample.image).save(out / img_name, format="PNG")
    else:
        raise ValueError(f"unknown image format {image_format!r}")
    mask_name = f"{stem}.mask.png"
    sample.mask.save_png(out / mask_name)
    prov_name = f"{stem}.provenance.json"
    (out / prov_name).write_text(json.dumps(sample.provenance, indent=1, sort_keys=True),
                                 encoding="utf-8")
    return {"image": img_name, "mask": mask_name, "provenance": prov_name}


def generate_corpus(config: GenerationConfig, count: int, base_seed: int, out_dir,
                    jobs: int = 1) -> list[dict]:
    """Write `count` samples; sample i uses seed base_seed + i."""
    scenes = SceneSource(config)
    colors = _resolve_colors(config)
    lexicon = _resolve_lexicon(config)

    def make(i: int) -> dict:
        sample = generate_sample(config, base_seed + i, scenes=scenes, colors=colors, lexicon=lexicon)
        files = save_sample(sample, out_dir, f"sample_{base_seed + i:08d}", config.image_format)
        files["seed"] = base_seed + i
        return files

    if jobs <= 1:
        return [make(i) for i in range(count)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(make, range(count)))
