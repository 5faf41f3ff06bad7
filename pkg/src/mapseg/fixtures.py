"""Procedural demo scenes: offline vector+elevation fixtures.

Scenes stand in for live tile services; each one is a deterministic
function of its seed and spans ~72 km so that windows at zooms 11-14
stay inside it. Class mix is tuned so default-config corpora land near
the reference class-area distribution (non-built dominant, water
around a tenth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .features import VectorFeature, rule_for, save_features
from .geodata import BBox, WORLD_EXTENT_M
from .relief import ElevationGrid

SCENE_HALF_EXTENT_M = 36_000.0
DEM_CELLS = 192


@dataclass
class DemoScene:
    name: str
    features: list[VectorFeature]
    bbox: BBox
    elevation: ElevationGrid


def _feature(name: str, geometry: dict, **attrs) -> VectorFeature:
    rule = rule_for(name)
    return VectorFeature(
        geometry=geometry,
        feature_name=name,
        semantic_class=rule.role,
        attributes={k: str(v) for k, v in attrs.items()},
    )


def _blob(rng: np.random.Generator, cx: float, cy: float, radius: float,
          n: int = 12, roughness: float = 0.35) -> list[list[float]]:
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=n))
    radii = radius * (1 + roughness * (rng.random(n) - 0.5) * 2)
    ring = [[cx + r * math.cos(a), cy + r * math.sin(a)] for a, r in zip(angles, radii)]
    ring.append(ring[0])
    return ring


def _walk(rng: np.random.Generator, start: np.ndarray, heading: float, steps: int,
          step_len: float, wobble: float = 0.35) -> list[list[float]]:
    pts = [start.tolist()]
    p = start.astype(np.float64).copy()
    h = heading
    for _ in range(steps):
        h += rng.uniform(-wobble, wobble)
        p = p + step_len * np.array([math.cos(h), math.sin(h)])
        pts.append(p.tolist())
    return pts


def build_demo_scene(seed: int, name: str | None = None) -> DemoScene:
    """One deterministic scene: landcover base, lake+rivers, towns, roads."""
    rng = np.random.default_rng(seed)
    # keep scene centers well inside the projection band
    cx = float(rng.uniform(-0.4, 0.4)) * WORLD_EXTENT_M
    cy = float(rng.uniform(-0.35, 0.35)) * WORLD_EXTENT_M
    H = SCENE_HALF_EXTENT_M
    bbox = BBox(cx - H, cy - H, cx + H, cy + H)
    feats: list[VectorFeature] = []

    # landcover base: grass covers everything, wood/sand blobs on top
    pad = 6_000.0
    base = [[cx - H - pad, cy - H - pad], [cx + H + pad, cy - H - pad],
            [cx + H + pad, cy + H + pad], [cx - H - pad, cy + H + pad],
            [cx - H - pad, cy - H - pad]]
    feats.append(_feature("landcover_grass", {"type": "Polygon", "coordinates": [base]}, **{"class": "grass"}))
    for _ in range(int(rng.integers(12, 20))):
        bx, by = rng.uniform(-H, H, size=2)
        ring = _blob(rng, cx + bx, cy + by, float(rng.uniform(3_000, 10_000)))
        feats.append(_feature("landcover_wood", {"type": "Polygon", "coordinates": [ring]}, **{"class": "wood"}))
    for _ in range(int(rng.integers(2, 5))):
        bx, by = rng.uniform(-H, H, size=2)
        ring = _blob(rng, cx + bx, cy + by, float(rng.uniform(1_500, 4_000)))
        feats.append(_feature("landcover_sand", {"type": "Polygon", "coordinates": [ring]}, **{"class": "sand"}))

    # water: a couple of lakes plus meandering rivers
    for _ in range(2):
        bx, by = rng.uniform(-H * 0.75, H * 0.75, size=2)
        ring = _blob(rng, cx + bx, cy + by, float(rng.uniform(6_000, 9_500)), n=16, roughness=0.45)
        lake = {"type": "Polygon", "coordinates": [ring]}
        feats.append(_feature("water", lake, **{"class": "lake"}))
        feats.append(_feature("label_water", lake))
    for i in range(int(rng.integers(3, 6))):
        edge = rng.uniform(-H, H)
        start = np.array([cx - H, cy + edge])
        path = _walk(rng, start, rng.uniform(-0.5, 0.5), steps=26, step_len=H / 11)
        attrs = {}
        if i == 0 and rng.random() < 0.3:
            attrs["intermittent"] = "1"
        feats.append(_feature("waterway", {"type": "LineString", "coordinates": path}, **attrs))

    # towns: residential halo (small zooms), buildings + local roads (large zooms)
    n_towns = int(rng.integers(5, 10))
    town_centers = []
    for _ in range(n_towns):
        tx = cx + rng.uniform(-H * 0.8, H * 0.8)
        ty = cy + rng.uniform(-H * 0.8, H * 0.8)
        town_centers.append((tx, ty))
        halo = _blob(rng, tx, ty, float(rng.uniform(1_400, 3_200)), n=10, roughness=0.25)
        feats.append(_feature("landuse_residential", {"type": "Polygon", "coordinates": [halo]},
                              **{"class": "residential"}))
        for _ in range(int(rng.integers(30, 70))):
            bw = rng.uniform(60, 150)
            bh = rng.uniform(60, 150)
            ox = tx + rng.normal(0, 900)
            oy = ty + rng.normal(0, 900)
            rect = [[ox, oy], [ox + bw, oy], [ox + bw, oy + bh], [ox, oy + bh], [ox, oy]]
            feats.append(_feature("building", {"type": "Polygon", "coordinates": [rect]}))
        for _ in range(int(rng.integers(8, 16))):
            heading = rng.uniform(0, 2 * math.pi)
            path = _walk(rng, np.array([tx, ty]), heading, steps=int(rng.integers(4, 9)),
                         step_len=rng.uniform(300, 800), wobble=0.2)
            feats.append(_feature("road_minor", {"type": "LineString", "coordinates": path},
                                  **{"class": "minor"}))
        feats.append(_feature("label_place_other", {"type": "Point", "coordinates": [tx, ty]},
                              **{"class": "town"}))

    # long-range road network: motorways connect towns and cross the scene
    for i in range(int(rng.integers(4, 7))):
        a = town_centers[int(rng.integers(len(town_centers)))]
        heading = rng.uniform(0, 2 * math.pi)
        path = _walk(rng, np.array(a), heading, steps=30, step_len=H / 9, wobble=0.12)
        feats.append(_feature("road_motorway", {"type": "LineString", "coordinates": path},
                              **{"class": "motorway"}))
    # rail lines
    for _ in range(2):
        start = np.array([cx + rng.uniform(-H, H), cy - H])
        path = _walk(rng, start, math.pi / 2 + rng.uniform(-0.3, 0.3), steps=26, step_len=H / 11)
        feats.append(_feature("railway", {"type": "LineString", "coordinates": path},
                              **{"class": "rail"}))

    # administrative boundaries: a loose web of wandering province lines
    for vertical in (True, False):
        n_lines = int(rng.integers(4, 7))
        for k in range(n_lines):
            offset = -H + (k + 0.5 + rng.uniform(-0.2, 0.2)) * (2 * H / n_lines)
            if vertical:
                start = np.array([cx + offset, cy - H])
                heading = math.pi / 2
            else:
                start = np.array([cx - H, cy + offset])
                heading = 0.0
            path = _walk(rng, start, heading + rng.uniform(-0.35, 0.35), steps=22, step_len=H / 9)
            level = int(rng.choice([4, 6, 8]))
            feats.append(_feature("admin_sub", {"type": "LineString", "coordinates": path},
                                  admin_level=level))

    elevation = build_demo_elevation(seed + 101, bbox)
    return DemoScene(name=name or f"scene_{seed:04d}", features=feats, bbox=bbox, elevation=elevation)


def build_demo_elevation(seed: int, bbox: BBox, cells: int = DEM_CELLS) -> ElevationGrid:
    """Fractal terrain: smoothed octaves of white noise, 100-900 m."""
    rng = np.random.default_rng(seed)
    total = np.zeros((cells, cells))
    for octave, sigma in enumerate((24.0, 12.0, 6.0, 3.0)):
        total += ndimage.gaussian_filter(rng.standard_normal((cells, cells)), sigma) * (0.55 ** octave)
    total = (total - total.min()) / max(np.ptp(total), 1e-12)
    values = 100.0 + 800.0 * total
    return ElevationGrid(values=values, cell_size=bbox.width / cells, nodata=-9999.0, bbox=bbox)


def write_demo_fixtures(out_dir, count: int = 6, base_seed: int = 777) -> list[str]:
    """Write NDJSON scenes + 16-bit elevation PNGs under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(count):
        scene = build_demo_scene(base_seed + i)
        save_features(scene.features, out / f"{scene.name}.ndjson")
        scene.elevation.save_png16(out / f"{scene.name}.elevation.png")
        (out / f"{scene.name}.bbox.json").write_text(
            '{"min_x": %r, "min_y": %r, "max_x": %r, "max_y": %r}'
            % (scene.bbox.min_x, scene.bbox.min_y, scene.bbox.max_x, scene.bbox.max_y),
            encoding="utf-8",
        )
        names.append(scene.name)
    return names
