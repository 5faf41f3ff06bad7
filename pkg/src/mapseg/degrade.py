"""Aging degradations: dark spots, grayscale, frame crop, JPEG cycle.

Applied in that order. Frame cropping is the single step allowed to
touch the label mask (the replaced band becomes background, like a
document border would be).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .classes import LabelMask, SemanticClass
from .style import StyleConfig

_EDGES = ("left", "right", "top", "bottom")
_CORNERS = ("top_left", "top_right", "bottom_left", "bottom_right")


@dataclass
class DegradeResult:
    image: np.ndarray
    mask: LabelMask | None
    frame_box: tuple[int, int, int, int] | None  # x0, y0, x1, y1 (exclusive)
    grayscaled: bool
    jpeg_quality: int
    spot_count: int


def to_grayscale(image: np.ndarray) -> np.ndarray:
    y = np.rint(0.299 * image[..., 0] + 0.587 * image[..., 1] + 0.114 * image[..., 2])
    y = np.clip(y, 0, 255).astype(np.uint8)
    return np.repeat(y[..., None], 3, axis=2)


def jpeg_cycle(image: np.ndarray, quality: int) -> np.ndarray:
    buf = io.BytesIO()
    # 4:4:4 chroma near the top of the scale, so quality 100 is near-identity
    subsampling = 0 if quality >= 95 else -1
    Image.fromarray(image).save(buf, format="JPEG", quality=quality, subsampling=subsampling)
    buf.seek(0)
    return np.asarray(Image.open(buf).convert("RGB"), dtype=np.uint8)


def _draw_spots(image: np.ndarray, style: StyleConfig, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    h, w = image.shape[:2]
    lo, hi = style.dark_spot_count
    n = int(rng.integers(lo, hi + 1))
    if n == 0:
        return image, 0
    out = image.astype(np.float64)
    for _ in range(n):
        cx = float(rng.uniform(0, w))
        cy = float(rng.uniform(0, h))
        r = float(rng.uniform(*style.dark_spot_radius))
        aspect = float(rng.uniform(0.6, 1.6))
        theta = float(rng.uniform(0, math.pi))
        alpha = float(rng.uniform(*style.dark_spot_opacity))
        tint = np.array([70, 55, 35], dtype=np.float64) + rng.uniform(-15, 15, size=3)
        rx, ry = r, r * aspect
        x0 = max(0, int(cx - max(rx, ry) - 1))
        x1 = min(w, int(cx + max(rx, ry) + 2))
        y0 = max(0, int(cy - max(rx, ry) - 1))
        y1 = min(h, int(cy + max(rx, ry) + 2))
        if x1 <= x0 or y1 <= y0:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        dx = (xx + 0.5 - cx)
        dy = (yy + 0.5 - cy)
        xr = dx * math.cos(theta) + dy * math.sin(theta)
        yr = -dx * math.sin(theta) + dy * math.cos(theta)
        inside = (xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0
        patch = out[y0:y1, x0:x1]
        patch[inside] = patch[inside] * (1 - alpha) + tint * alpha
    return np.clip(np.rint(out), 0, 255).astype(np.uint8), n


def _paper_tone(rng: np.random.Generator, gray: bool) -> np.ndarray:
    base = float(rng.uniform(222, 245))
    tone = np.array([base, base - rng.uniform(0, 8), base - rng.uniform(4, 18)])
    if gray:
        y = 0.299 * tone[0] + 0.587 * tone[1] + 0.114 * tone[2]
        tone = np.array([y, y, y])
    return np.clip(np.rint(tone), 0, 255).astype(np.uint8)


def _frame_crop(
    image: np.ndarray,
    mask: np.ndarray | None,
    style: StyleConfig,
    rng: np.random.Generator,
    gray: bool,
) -> tuple[np.ndarray, np.ndarray | None, tuple[int, int, int, int]]:
    h, w = image.shape[:2]
    place = (_EDGES + _CORNERS)[int(rng.integers(len(_EDGES) + len(_CORNERS)))]
    tx = int(rng.uniform(0.04, 0.22) * w)
    ty = int(rng.uniform(0.04, 0.22) * h)
    tx, ty = max(tx, 2), max(ty, 2)
    if place == "left":
        box = (0, 0, tx, h)
    elif place == "right":
        box = (w - tx, 0, w, h)
    elif place == "top":
        box = (0, 0, w, ty)
    elif place == "bottom":
        box = (0, h - ty, w, h)
    elif place == "top_left":
        box = (0, 0, tx, ty)
    elif place == "top_right":
        box = (w - tx, 0, w, ty)
    elif place == "bottom_left":
        box = (0, h - ty, tx, h)
    else:
        box = (w - tx, h - ty, w, h)
    x0, y0, x1, y1 = box
    out = image.copy()
    out[y0:y1, x0:x1] = _paper_tone(rng, gray)
    if mask is not None:
        mask = mask.copy()
        mask[y0:y1, x0:x1] = int(SemanticClass.BACKGROUND)
    return out, mask, box


def apply_degradations(
    image: np.ndarray,
    style: StyleConfig,
    rng: np.random.Generator,
    mask: LabelMask | None = None,
) -> DegradeResult:
    """Run the degradation chain; returns the image plus the (possibly
    frame-cropped) mask when one is supplied."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    mask_arr = mask.data if mask is not None else None

    img, n_spots = _draw_spots(img, style, rng)

    grayscaled = rng.random() < style.grayscale_prob
    if grayscaled:
        img = to_grayscale(img)

    frame_box = None
    if rng.random() < style.frame_crop_prob:
        img, mask_arr, frame_box = _frame_crop(img, mask_arr, style, rng, grayscaled)

    q0, q1 = style.jpeg_quality_range
    quality = int(rng.integers(q0, q1 + 1))
    img = jpeg_cycle(img, quality)

    out_mask = LabelMask.from_array(mask_arr) if mask_arr is not None else None
    return DegradeResult(
        image=img,
        mask=out_mask,
        frame_box=frame_box,
        grayscaled=grayscaled,
        jpeg_quality=quality,
        spot_count=n_spots,
    )
