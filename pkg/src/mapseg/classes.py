"""Semantic class taxonomy and dense label masks.

Six pixel classes: 0 background, 1 boundary, 2 built, 3 non-built,
4 water, 5 road network. The four "geographic" classes (2..5) are the
ones averaged in headline metrics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from PIL import Image


class SemanticClass(enum.IntEnum):
    BACKGROUND = 0
    BOUNDARY = 1
    BUILT = 2
    NON_BUILT = 3
    WATER = 4
    ROAD_NETWORK = 5


NUM_CLASSES = 6
CLASS_NAMES = ("background", "boundary", "built", "non-built", "water", "road network")
GEOGRAPHIC_CLASSES = (
    SemanticClass.BUILT,
    SemanticClass.NON_BUILT,
    SemanticClass.WATER,
    SemanticClass.ROAD_NETWORK,
)
ALL_CLASSES = tuple(SemanticClass)

# Display palette for quick-look renders of label masks (not used in metrics).
CLASS_COLORS = (
    (255, 255, 255),  # background
    (60, 60, 60),     # boundary
    (190, 60, 50),    # built
    (150, 200, 120),  # non-built
    (90, 140, 220),   # water
    (235, 200, 80),   # road network
)


@dataclass
class LabelMask:
    """Dense per-pixel class ids, row-major uint8, values in 0..5."""

    width: int
    height: int
    data: np.ndarray

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "LabelMask":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"label mask must be 2-D, got shape {arr.shape}")
        if arr.size and arr.max() >= NUM_CLASSES:
            raise ValueError(f"label mask contains id {int(arr.max())} >= {NUM_CLASSES}")
        h, w = arr.shape
        return cls(width=w, height=h, data=arr)

    @classmethod
    def full(cls, width: int, height: int, value: int = 0) -> "LabelMask":
        if width <= 0 or height <= 0:
            raise ValueError("mask dimensions must be positive")
        return cls(width, height, np.full((height, width), value, dtype=np.uint8))

    def copy(self) -> "LabelMask":
        return LabelMask(self.width, self.height, self.data.copy())

    def class_counts(self) -> np.ndarray:
        """Pixel count per class id, shape (6,)."""
        return np.bincount(self.data.ravel(), minlength=NUM_CLASSES)[:NUM_CLASSES]

    def save_png(self, path) -> None:
        Image.fromarray(self.data, mode="L").save(path, format="PNG")

    @classmethod
    def load_png(cls, path) -> "LabelMask":
        arr = np.asarray(Image.open(path).convert("L"))
        return cls.from_array(arr)

    def to_color_image(self) -> np.ndarray:
        """RGB quick-look of the mask using the display palette."""
        palette = np.asarray(CLASS_COLORS, dtype=np.uint8)
        return palette[self.data]


def mask_data(mask) -> np.ndarray:
    """Accept a LabelMask or a raw 2-D array and return uint8 data."""
    if isinstance(mask, LabelMask):
        return mask.data
    return np.ascontiguousarray(mask, dtype=np.uint8)
