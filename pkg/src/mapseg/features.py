"""Vector features, the queryable-object catalog, and zoom-gated filtering.

The catalog mirrors the vector-tile object list used to assemble
template masks: each row names a feature, the semantic class (or text
role) it feeds, an optional zoom window, and an attribute filter.
Attribute filters are composed from a handful of predicate combinators
(equality, set membership, null/truthiness checks, geometry-type
checks) evaluated against a feature's string->string attribute map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .classes import SemanticClass
from .geodata import BBox, ZoomLevel

TEXT_ROLE = "text"

_TRUTHY = {"1", "true", "yes", "t"}


class UnknownFeatureError(KeyError):
    pass


# ---------------------------------------------------------------------------
# Geometry helpers (GeoJSON-style dicts, EPSG:3857 coordinates)

_BASE_TYPE = {
    "Point": "Point",
    "MultiPoint": "Point",
    "LineString": "LineString",
    "MultiLineString": "LineString",
    "Polygon": "Polygon",
    "MultiPolygon": "Polygon",
}


def geom_base_type(geometry: Mapping) -> str:
    t = geometry.get("type")
    if t not in _BASE_TYPE:
        raise ValueError(f"unsupported geometry type {t!r}")
    return _BASE_TYPE[t]


def geom_points(geometry: Mapping) -> list[tuple[float, float]]:
    """Point coordinates of a (Multi)Point geometry."""
    c = geometry["coordinates"]
    if geometry["type"] == "Point":
        return [tuple(c)]
    return [tuple(p) for p in c]


def geom_paths(geometry: Mapping) -> list[np.ndarray]:
    """(n,2) coordinate arrays, one per LineString part."""
    c = geometry["coordinates"]
    parts = [c] if geometry["type"] == "LineString" else c
    return [np.asarray(p, dtype=np.float64) for p in parts]


def geom_polygons(geometry: Mapping) -> list[list[np.ndarray]]:
    """Per polygon part: list of rings, each an (n,2) array (first = exterior)."""
    c = geometry["coordinates"]
    parts = [c] if geometry["type"] == "Polygon" else c
    return [[np.asarray(ring, dtype=np.float64) for ring in part] for part in parts]


def geom_bounds(geometry: Mapping) -> tuple[float, float, float, float]:
    coords: list = []

    def walk(node):
        if isinstance(node[0], (int, float)):
            coords.append(node)
        else:
            for sub in node:
                walk(sub)

    walk(geometry["coordinates"])
    arr = np.asarray(coords, dtype=np.float64)
    return float(arr[:, 0].min()), float(arr[:, 1].min()), float(arr[:, 0].max()), float(arr[:, 1].max())


def geom_is_empty(geometry: Mapping) -> bool:
    c = geometry.get("coordinates")
    return c is None or len(c) == 0


# ---------------------------------------------------------------------------
# Feature records


@dataclass
class VectorFeature:
    geometry: dict
    feature_name: str
    semantic_class: SemanticClass | str
    attributes: dict[str, str] = field(default_factory=dict)

    def attr(self, name: str) -> str | None:
        return self.attributes.get(name)

    @property
    def geom_type(self) -> str:
        return geom_base_type(self.geometry)


@dataclass
class VectorFeatureSet:
    features: list[VectorFeature]
    source_bbox: BBox
    zoom: ZoomLevel

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)


# ---------------------------------------------------------------------------
# Predicate combinators

Predicate = Callable[[VectorFeature], bool]


def always(_: VectorFeature) -> bool:
    return True


def attr_is(name: str, value: str) -> Predicate:
    return lambda f: f.attr(name) == value


def attr_is_not(name: str, value: str) -> Predicate:
    return lambda f: f.attr(name) != value


def attr_in(name: str, values: Iterable[str]) -> Predicate:
    vals = frozenset(values)
    return lambda f: f.attr(name) in vals


def attr_not_in(name: str, values: Iterable[str]) -> Predicate:
    vals = frozenset(values)
    return lambda f: f.attr(name) not in vals


def attr_is_null(name: str) -> Predicate:
    return lambda f: f.attr(name) is None


def attr_not_null(name: str) -> Predicate:
    return lambda f: f.attr(name) is not None


def attr_truthy(name: str) -> Predicate:
    return lambda f: (f.attr(name) or "").lower() in _TRUTHY


def negate(pred: Predicate) -> Predicate:
    return lambda f: not pred(f)


def all_of(*preds: Predicate) -> Predicate:
    return lambda f: all(p(f) for p in preds)


def any_of(*preds: Predicate) -> Predicate:
    return lambda f: any(p(f) for p in preds)


def geom_is(*types: str) -> Predicate:
    wanted = frozenset(types)
    return lambda f: f.geom_type in wanted


# ---------------------------------------------------------------------------
# Catalog of queryable objects


@dataclass(frozen=True)
class FeatureRule:
    feature_name: str
    category: str
    role: SemanticClass | str  # semantic class, or "text" for label anchors
    zoom_min: int | None
    zoom_max: int | None
    predicate: Predicate

    def zoom_allows(self, z: int) -> bool:
        if self.zoom_min is not None and z < self.zoom_min:
            return False
        if self.zoom_max is not None and z > self.zoom_max:
            return False
        return True


_C = SemanticClass

FEATURE_RULES: dict[str, FeatureRule] = {
    r.feature_name: r
    for r in [
        FeatureRule("landuse_residential", "landuse", _C.BUILT, 10, 11,
                    attr_in("class", ["residential", "suburb", "neighborhood"])),
        FeatureRule("landcover_grass", "landcover", _C.NON_BUILT, None, None, attr_is("class", "grass")),
        FeatureRule("landcover_wood", "landcover", _C.NON_BUILT, None, None, attr_is("class", "wood")),
        FeatureRule("landcover_sand", "landcover", _C.NON_BUILT, None, None, attr_is("class", "sand")),
        FeatureRule("landcover_glacier", "landcover", _C.NON_BUILT, None, None,
                    attr_in("subclass", ["glacier", "ice_shelf"])),
        FeatureRule("water", "water", _C.WATER, None, None,
                    all_of(negate(attr_truthy("intermittent")), attr_is_not("brunnel", "tunnel"))),
        FeatureRule("water_intermittent", "water", _C.WATER, None, None, attr_truthy("intermittent")),
        FeatureRule("waterway", "waterway", _C.WATER, None, None,
                    any_of(attr_is_null("brunnel"),
                           all_of(attr_not_in("brunnel", ["tunnel", "bridge"]),
                                  negate(attr_truthy("intermittent"))))),
        FeatureRule("building", "building", _C.BUILT, 13, None, always),
        FeatureRule("road_area_pier", "transportation", _C.ROAD_NETWORK, None, None,
                    all_of(geom_is("Polygon"), attr_is("class", "pier"))),
        FeatureRule("road_area_bridge", "transportation", _C.ROAD_NETWORK, None, None,
                    all_of(geom_is("Polygon"), attr_is("brunnel", "bridge"))),
        FeatureRule("road_pier", "transportation", _C.ROAD_NETWORK, 14, None, attr_in("class", ["pier"])),
        FeatureRule("road_minor", "transportation", _C.ROAD_NETWORK, 13, None,
                    attr_in("class", ["minor", "service"])),
        FeatureRule("road_major", "transportation", _C.ROAD_NETWORK, None, None, attr_is("class", "motorway")),
        FeatureRule("road_motorway", "transportation", _C.ROAD_NETWORK, 4, None, attr_is("class", "motorway")),
        FeatureRule("railway", "transportation", _C.ROAD_NETWORK, 11, None, attr_is("class", "rail")),
        FeatureRule("bridge", "transportation", _C.ROAD_NETWORK, None, None,
                    all_of(attr_is("brunnel", "bridge"),
                           attr_in("class", ["primary", "secondary", "tertiary"]))),
        FeatureRule("admin_sub", "boundary", _C.BOUNDARY, 3, None, attr_in("admin_level", ["4", "6", "8"])),
        # city/town dots drawn as built symbols at small zooms; the source
        # table lists this row's feature as "(all)" of the place category
        FeatureRule("place", "place", _C.BUILT, 3, 9, attr_in("class", ["city", "town"])),
        FeatureRule("label_airport", "aerodrome_label", TEXT_ROLE, 10, None, attr_not_null("iata")),
        FeatureRule("label_road", "transportation_name", TEXT_ROLE, 13, None,
                    all_of(geom_is("LineString"), attr_is_not("subclass", "ferry"))),
        FeatureRule("label_place_other", "place", TEXT_ROLE, 8, None,
                    all_of(geom_is("Point"),
                           any_of(attr_is_null("class"),
                                  attr_not_in("class", ["city", "state", "country", "continent"])))),
        FeatureRule("label_place_city", "place", TEXT_ROLE, None, 16,
                    all_of(geom_is("Point"), attr_is("class", "city"))),
        FeatureRule("label_country_other", "place", TEXT_ROLE, None, 12,
                    all_of(geom_is("Point"), attr_is("class", "country"))),
        FeatureRule("label_water", "water_name", TEXT_ROLE, 10, None, geom_is("Polygon", "LineString")),
    ]
}


def rule_for(feature_name: str) -> FeatureRule:
    try:
        return FEATURE_RULES[feature_name]
    except KeyError:
        raise UnknownFeatureError(f"feature name {feature_name!r} not in the object catalog") from None


def filter_features(
    fset: VectorFeatureSet,
    zoom: ZoomLevel | int,
    hide_probs: Mapping[str, float] | None = None,
    seed: int | None = None,
) -> VectorFeatureSet:
    """Keep features whose catalog row admits `zoom` and whose filter passes.

    When `hide_probs` maps feature names to probabilities and a seed is
    supplied, each matching feature is independently dropped with its
    name's probability (cartographic incompleteness). With no seed or
    probability 0 the result is deterministic and idempotent.
    """
    z = int(zoom)
    rng = np.random.default_rng(seed) if (hide_probs and seed is not None) else None
    kept: list[VectorFeature] = []
    for feat in fset.features:
        rule = rule_for(feat.feature_name)
        if not rule.zoom_allows(z):
            continue
        if not rule.predicate(feat):
            continue
        if rng is not None:
            p = hide_probs.get(feat.feature_name, 0.0)
            if p > 0 and rng.random() < p:
                continue
        kept.append(feat)
    return VectorFeatureSet(features=kept, source_bbox=fset.source_bbox, zoom=ZoomLevel(z))


# ---------------------------------------------------------------------------
# Newline-delimited JSON feature files


def _stringify_attrs(raw: Mapping) -> dict[str, str]:
    out = {}
    for k, v in raw.items():
        if v is None:
            continue
        if isinstance(v, bool):
            out[str(k)] = "true" if v else "false"
        else:
            out[str(k)] = str(v)
    return out


def load_features(path) -> list[VectorFeature]:
    """Read one feature per line: {"geometry":..., "feature":..., "attributes":...}."""
    feats = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad JSON ({exc})") from exc
            name = obj["feature"]
            rule = rule_for(name)
            geometry = obj["geometry"]
            if geom_is_empty(geometry):
                raise ValueError(f"{path}:{lineno}: empty geometry for {name!r}")
            feats.append(
                VectorFeature(
                    geometry=geometry,
                    feature_name=name,
                    semantic_class=rule.role,
                    attributes=_stringify_attrs(obj.get("attributes", {})),
                )
            )
    return feats


def save_features(features: Sequence[VectorFeature], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in features:
            fh.write(json.dumps(
                {"geometry": f.geometry, "feature": f.feature_name, "attributes": f.attributes},
                sort_keys=True,
            ))
            fh.write("\n")


def clip_to_bbox(features: Iterable[VectorFeature], bbox: BBox, zoom: ZoomLevel | int) -> VectorFeatureSet:
    """Feature set restricted to geometries whose bounds touch `bbox`."""
    kept = []
    for f in features:
        x0, y0, x1, y1 = geom_bounds(f.geometry)
        if not (x0 > bbox.max_x or x1 < bbox.min_x or y0 > bbox.max_y or y1 < bbox.min_y):
            kept.append(f)
    return VectorFeatureSet(features=kept, source_bbox=bbox, zoom=ZoomLevel(int(zoom)))


def load_feature_dir(path) -> dict[str, list[VectorFeature]]:
    """All *.ndjson scene files in a directory, keyed by stem."""
    scenes = {}
    for p in sorted(Path(path).glob("*.ndjson")):
        scenes[p.stem] = load_features(p)
    if not scenes:
        raise FileNotFoundError(f"no *.ndjson feature files under {path}")
    return scenes
