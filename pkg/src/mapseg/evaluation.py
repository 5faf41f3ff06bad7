"""Per-image segmentation counts, aggregation strategies, confusion matrices.

Per image and class we count ground-truth pixels |Y|, predicted pixels
|Yhat|, their intersection and union, then aggregate four ways:

  sample-normalized-macro  per class, the per-image metric values are
                           averaged weighted by that image's ground-truth
                           pixel count, then averaged over classes
  micro                    per image, one pooled ratio over the class
                           set; mean over images
  macro                    one ratio pooled over all images and classes
  per-class-macro          per class, one ratio pooled over images;
                           mean over classes

Headline means use the four geographic classes (built, non-built,
water, road network) unless another class set is passed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .classes import CLASS_NAMES, GEOGRAPHIC_CLASSES, NUM_CLASSES, mask_data

STRATEGIES = ("sample-normalized-macro", "micro", "macro", "per-class-macro")

GEOGRAPHIC_IDS = tuple(int(c) for c in GEOGRAPHIC_CLASSES)


class EvaluationError(ValueError):
    pass


@dataclass
class PerImageCounts:
    """Pixel counts per class for one image pair."""

    gt_pixels: np.ndarray        # |Y_k|
    pred_pixels: np.ndarray      # |Yhat_k|
    intersection: np.ndarray     # |Y_k ∩ Yhat_k|
    image_id: str | None = None

    @property
    def union(self) -> np.ndarray:
        return self.gt_pixels + self.pred_pixels - self.intersection

    @property
    def total_pixels(self) -> int:
        return int(self.gt_pixels.sum())

    @property
    def correct_pixels(self) -> int:
        return int(self.intersection.sum())

    def iou(self) -> np.ndarray:
        return _safe_ratio(self.intersection, self.union)

    def precision(self) -> np.ndarray:
        return _safe_ratio(self.intersection, self.pred_pixels)

    def recall(self) -> np.ndarray:
        return _safe_ratio(self.intersection, self.gt_pixels)

    def present(self) -> np.ndarray:
        """Classes appearing in gt or prediction (others have no metrics)."""
        return self.union > 0


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise num/den with nan where the denominator is zero."""
    out = np.full(num.shape, np.nan, dtype=np.float64)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def _joint_hist(gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """(6,6) counts[actual, predicted] via one bincount pass."""
    idx = gt.astype(np.int64).ravel() * NUM_CLASSES + pred.astype(np.int64).ravel()
    return np.bincount(idx, minlength=NUM_CLASSES ** 2).reshape(NUM_CLASSES, NUM_CLASSES)


def per_image_metrics(pred, gt, image_id: str | None = None) -> PerImageCounts:
    """Exact integer counting for one predicted/ground-truth pair."""
    p = mask_data(pred)
    g = mask_data(gt)
    if p.shape != g.shape:
        raise EvaluationError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    hist = _joint_hist(g, p)
    return PerImageCounts(
        gt_pixels=hist.sum(axis=1),
        pred_pixels=hist.sum(axis=0),
        intersection=np.diag(hist).copy(),
        image_id=image_id,
    )


# ---------------------------------------------------------------------------
# Aggregation


@dataclass
class MetricsReport:
    strategy: str
    class_ids: tuple[int, ...]
    per_class: dict[int, dict[str, float | None]]
    miou: float
    mr: float
    mp: float
    prm: float
    f1: float
    acc: float
    n_images: int
    per_image: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "classes": [CLASS_NAMES[c] for c in self.class_ids],
            "per_class": {
                CLASS_NAMES[c]: vals for c, vals in self.per_class.items()
            },
            "miou": self.miou,
            "mr": self.mr,
            "mp": self.mp,
            "prm": self.prm,
            "f1": self.f1,
            "acc": self.acc,
            "n_images": self.n_images,
            "per_image": self.per_image,
        }


_METRIC_DENOMS = {
    "iou": lambda c: c.union,
    "rec": lambda c: c.gt_pixels,
    "prec": lambda c: c.pred_pixels,
}


def _sample_normalized_class(counts: list[PerImageCounts], metric: str, k: int) -> float | None:
    num = 0.0
    den = 0.0
    for c in counts:
        d = float(_METRIC_DENOMS[metric](c)[k])
        w = float(c.gt_pixels[k])
        if d <= 0 or w <= 0:
            continue  # metric undefined, or zero weight: excluded either way
        num += (c.intersection[k] / d) * w
        den += w
    return num / den if den > 0 else None


def _pooled_class(counts: list[PerImageCounts], metric: str, k: int) -> float | None:
    num = sum(float(c.intersection[k]) for c in counts)
    den = sum(float(_METRIC_DENOMS[metric](c)[k]) for c in counts)
    return num / den if den > 0 else None


def _micro(counts: list[PerImageCounts], metric: str, ids) -> float | None:
    ratios = []
    for c in counts:
        num = float(c.intersection[list(ids)].sum())
        den = float(_METRIC_DENOMS[metric](c)[list(ids)].sum())
        if den > 0:
            ratios.append(num / den)
    return float(np.mean(ratios)) if ratios else None


def _macro(counts: list[PerImageCounts], metric: str, ids) -> float | None:
    num = sum(float(c.intersection[list(ids)].sum()) for c in counts)
    den = sum(float(_METRIC_DENOMS[metric](c)[list(ids)].sum()) for c in counts)
    return num / den if den > 0 else None


def _mean_over_classes(values: dict[int, float | None]) -> float:
    vals = [v for v in values.values() if v is not None]
    if not vals:
        raise EvaluationError("no class had defined metrics")
    return float(np.mean(vals))


def aggregate(
    counts: list[PerImageCounts],
    strategy: str = "sample-normalized-macro",
    class_ids=GEOGRAPHIC_IDS,
    with_per_image: bool = False,
) -> MetricsReport:
    """Fold per-image counts into a MetricsReport under one strategy."""
    if not counts:
        raise EvaluationError("aggregate needs at least one image")
    strategy = strategy.replace("_", "-")
    if strategy not in STRATEGIES:
        raise EvaluationError(f"unknown strategy {strategy!r}; pick one of {STRATEGIES}")
    ids = tuple(int(c) for c in class_ids)

    if strategy == "sample-normalized-macro":
        class_fn = _sample_normalized_class
    else:
        class_fn = _pooled_class
    per_class = {
        k: {
            "iou": class_fn(counts, "iou", k),
            "prec": class_fn(counts, "prec", k),
            "rec": class_fn(counts, "rec", k),
        }
        for k in range(NUM_CLASSES)
    }

    if strategy in ("sample-normalized-macro", "per-class-macro"):
        miou = _mean_over_classes({k: per_class[k]["iou"] for k in ids})
        mp = _mean_over_classes({k: per_class[k]["prec"] for k in ids})
        mr = _mean_over_classes({k: per_class[k]["rec"] for k in ids})
    elif strategy == "micro":
        miou = _micro(counts, "iou", ids)
        mp = _micro(counts, "prec", ids)
        mr = _micro(counts, "rec", ids)
    else:  # macro
        miou = _macro(counts, "iou", ids)
        mp = _macro(counts, "prec", ids)
        mr = _macro(counts, "rec", ids)
    if miou is None or mp is None or mr is None:
        raise EvaluationError("selected classes are absent from every image")

    total = sum(c.total_pixels for c in counts)
    correct = sum(c.correct_pixels for c in counts)
    acc = correct / total if total else float("nan")
    prm = (mp + mr) / 2
    f1 = 2 * mp * mr / (mp + mr) if (mp + mr) > 0 else 0.0

    per_image = []
    if with_per_image:
        for c in counts:
            iou = c.iou()
            geo = [iou[k] for k in ids if np.isfinite(iou[k])]
            per_image.append({
                "id": c.image_id,
                "miou": float(np.mean(geo)) if geo else None,
                "iou": {CLASS_NAMES[k]: (float(iou[k]) if np.isfinite(iou[k]) else None)
                        for k in range(NUM_CLASSES)},
            })

    return MetricsReport(
        strategy=strategy, class_ids=ids, per_class=per_class,
        miou=float(miou), mr=float(mr), mp=float(mp), prm=float(prm), f1=float(f1),
        acc=float(acc), n_images=len(counts), per_image=per_image,
    )


# ---------------------------------------------------------------------------
# Confusion matrices


@dataclass
class ConfusionMatrix:
    """Raw counts[actual, predicted] plus a normalization mode."""

    counts: np.ndarray
    mode: str = "none"  # none | per-prediction | per-ground-truth

    def normalized(self) -> np.ndarray:
        """Per-prediction: rows are predicted classes summing to 1 (diagonal =
        precision). Per-ground-truth: rows are actual classes summing to 1
        (diagonal = recall)."""
        c = self.counts.astype(np.float64)
        if self.mode == "none":
            return c
        if self.mode == "per-prediction":
            m = c.T.copy()  # rows: predicted class
        elif self.mode == "per-ground-truth":
            m = c.copy()  # rows: actual class
        else:
            raise EvaluationError(f"unknown confusion mode {self.mode!r}")
        sums = m.sum(axis=1, keepdims=True)
        nz = sums[:, 0] > 0
        m[nz] /= sums[nz]
        return m


def confusion(preds, gts, mode: str = "none") -> ConfusionMatrix:
    """Accumulate a 6x6 confusion matrix over aligned mask pairs."""
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise EvaluationError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    total = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for p, g in zip(preds, gts):
        pa, ga = mask_data(p), mask_data(g)
        if pa.shape != ga.shape:
            raise EvaluationError(f"shape mismatch: pred {pa.shape} vs gt {ga.shape}")
        total += _joint_hist(ga, pa)
    return ConfusionMatrix(counts=total, mode=mode)


def save_confusion_csv(matrix: ConfusionMatrix, path) -> None:
    m = matrix.normalized()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(CLASS_NAMES))
        row_names = CLASS_NAMES
        for name, row in zip(row_names, m):
            writer.writerow([name] + [f"{v:.6f}" for v in row])


def class_area(masks) -> np.ndarray:
    """Pixel share per class over a mask collection, percentages summing to 100."""
    masks = list(masks)
    if not masks:
        raise EvaluationError("class_area needs at least one mask")
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    for m in masks:
        arr = mask_data(m)
        counts += np.bincount(arr.ravel(), minlength=NUM_CLASSES)[:NUM_CLASSES]
    return 100.0 * counts / counts.sum()
