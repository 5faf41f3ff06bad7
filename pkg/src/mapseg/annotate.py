"""Image-only decorations: place-name labels and graticule grids.

Both stamp pixels on the rendered image and never touch the label
mask. Fonts come from the system DejaVu set when present, otherwise
Pillow's built-in face.
"""

from __future__ import annotations

import glob
from functools import lru_cache
from importlib import resources

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .style import StyleConfig

_FONT_DIRS = (
    "/usr/share/fonts/truetype/dejavu",
    "/usr/share/fonts/truetype",
)


@lru_cache(maxsize=1)
def available_font_paths() -> tuple[str, ...]:
    found: list[str] = []
    for d in _FONT_DIRS:
        found.extend(sorted(glob.glob(d + "/*.ttf")))
        if found:
            break
    return tuple(found)


def _load_font(path: str | None, size: int):
    if path is None:
        return ImageFont.load_default(size=size)
    return ImageFont.truetype(path, size=size)


def load_default_lexicon() -> list[str]:
    """Bundled place-name repertoire (one name per line)."""
    text = resources.files("mapseg.data").joinpath("lexicon.txt").read_text(encoding="utf-8")
    names = [line.strip() for line in text.splitlines() if line.strip()]
    if not names:
        raise ValueError("bundled lexicon is empty")
    return names


def graticule_positions(dim: int, spacing: float) -> list[int]:
    """Interior grid-line coordinates: spacing, 2*spacing, ... < dim."""
    if spacing <= 0:
        return []
    out = []
    k = 1
    while k * spacing < dim:
        p = int(round(k * spacing))
        if p < dim:  # rounding the last offset can hit the edge
            out.append(p)
        k += 1
    return out


def draw_graticule(image: np.ndarray, spacing: float, rng: np.random.Generator) -> np.ndarray:
    """Overlay evenly spaced horizontal + vertical lines (alpha-blended)."""
    out = image.astype(np.float64)
    h, w = out.shape[:2]
    shade = float(rng.uniform(30, 90))
    alpha = float(rng.uniform(0.5, 0.85))
    ink = np.array([shade, shade, shade])
    for x in graticule_positions(w, spacing):
        out[:, x] = out[:, x] * (1 - alpha) + ink * alpha
    for y in graticule_positions(h, spacing):
        out[y, :] = out[y, :] * (1 - alpha) + ink * alpha
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def annotate(
    image: np.ndarray,
    lexicon: list[str],
    style: StyleConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Stamp text labels and (possibly) a graticule; mask-free by design.

    With label_density == 0 and graticule_prob == 0 the input comes back
    byte-identical.
    """
    h, w = image.shape[:2]
    n_labels = int(round(style.label_density * (w * h) / 1e6))
    if style.label_density > 0 and n_labels > 0 and not lexicon:
        raise ValueError("label_density > 0 requires a non-empty lexicon")
    if n_labels == 0 and style.graticule_prob == 0:
        return image.copy()

    canvas = Image.fromarray(image).convert("RGBA")
    fonts = available_font_paths()
    for _ in range(n_labels):
        word = lexicon[int(rng.integers(len(lexicon)))]
        size = int(rng.integers(style.label_size_range[0], style.label_size_range[1] + 1))
        font_path = fonts[int(rng.integers(len(fonts)))] if fonts else None
        font = _load_font(font_path, size)
        upright = rng.random() < 0.85
        angle = float(rng.uniform(-25, 25)) if upright else float(rng.choice([-90.0, 90.0]))
        shade = int(rng.integers(10, 80))
        ink = (shade, shade, shade, 255)
        probe = Image.new("RGBA", (1, 1))
        bbox = ImageDraw.Draw(probe).textbbox((0, 0), word, font=font)
        tw, th = max(1, bbox[2] - bbox[0]), max(1, bbox[3] - bbox[1])
        label = Image.new("RGBA", (tw + 4, th + 4), (0, 0, 0, 0))
        ImageDraw.Draw(label).text((2 - bbox[0], 2 - bbox[1]), word, font=font, fill=ink)
        label = label.rotate(angle, expand=True, resample=Image.BICUBIC)
        x = int(rng.integers(-label.width // 2, w - label.width // 2 + 1))
        y = int(rng.integers(-label.height // 2, h - label.height // 2 + 1))
        canvas.paste(label, (x, y), label)  # paste clips at the borders

    out = np.asarray(canvas.convert("RGB"), dtype=np.uint8)
    if style.graticule_prob > 0 and rng.random() < style.graticule_prob:
        spacing = float(rng.uniform(*style.graticule_spacing))
        out = draw_graticule(out, spacing, rng)
    return out
