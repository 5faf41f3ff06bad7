"""Tiled multiscale inference over large map images.

Images are partitioned into overlapping patches (default 768 px with a
64-px overlap); per-tile logits are mean-accumulated into a full-image
map. Multiscale runs repeat this at reduced resolutions (default half),
upsample the per-scale maps back to native size, average them with
equal weight, and take the per-pixel argmax (ties go to the lowest
class id). Tile accumulation always happens in row-major tile order,
so results are bit-reproducible no matter how tiles were evaluated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .classes import NUM_CLASSES, LabelMask

DEFAULT_PATCH = 768
DEFAULT_OVERLAP = 64
DEFAULT_SCALES = (1.0, 0.5)

LGT_MAGIC = b"LGT1"


class InferenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TileContext:
    """Where a tile sits: top-left corner in (possibly padded) scaled pixels."""

    x: int
    y: int
    scale: float = 1.0


@dataclass
class TileGrid:
    patch: int
    overlap: int
    positions: list[tuple[int, int]]
    image_width: int
    image_height: int
    padded_width: int
    padded_height: int

    @property
    def padded(self) -> bool:
        return (self.padded_width, self.padded_height) != (self.image_width, self.image_height)


def _axis_positions(dim: int, patch: int, stride: int) -> list[int]:
    positions = []
    x = 0
    while True:
        if x + patch >= dim:
            positions.append(dim - patch)
            break
        positions.append(x)
        x += stride
    # clamping can revisit an earlier offset; keep first occurrences only
    seen: set[int] = set()
    out = []
    for p in positions:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


def plan_tiles(width: int, height: int, patch: int = DEFAULT_PATCH,
               overlap: int = DEFAULT_OVERLAP) -> TileGrid:
    """Row-major overlapped tile plan; sub-patch images get padded dims."""
    if width < 1 or height < 1:
        raise InferenceError("image dimensions must be positive")
    if not (patch > overlap >= 0):
        raise InferenceError(f"need patch > overlap >= 0, got patch={patch} overlap={overlap}")
    stride = patch - overlap
    pw, ph = max(width, patch), max(height, patch)
    xs = _axis_positions(pw, patch, stride)
    ys = _axis_positions(ph, patch, stride)
    positions = [(x, y) for y in ys for x in xs]
    return TileGrid(patch=patch, overlap=overlap, positions=positions,
                    image_width=width, image_height=height,
                    padded_width=pw, padded_height=ph)


@dataclass
class LogitMap:
    """Per-pixel per-class score accumulator with contribution counts."""

    width: int
    height: int
    classes: int = NUM_CLASSES
    scores: np.ndarray = field(default=None)
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.scores is None:
            self.scores = np.zeros((self.classes, self.height, self.width), dtype=np.float64)
        if self.counts is None:
            self.counts = np.zeros((self.height, self.width), dtype=np.int32)

    def add_tile(self, x: int, y: int, logits: np.ndarray) -> None:
        c, th, tw = logits.shape
        self.scores[:, y:y + th, x:x + tw] += logits
        self.counts[y:y + th, x:x + tw] += 1

    def finalized(self) -> np.ndarray:
        if (self.counts < 1).any():
            raise InferenceError("logit map has uncovered pixels")
        return self.scores / self.counts[None, :, :]


def reflect_pad_image(image: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    h, w = image.shape[:2]
    if (h, w) == (target_h, target_w):
        return image
    pad_h, pad_w = target_h - h, target_w - w
    mode = "reflect" if min(h, w) > 1 else "edge"
    widths = ((0, pad_h), (0, pad_w)) + (((0, 0),) if image.ndim == 3 else ())
    return np.pad(image, widths, mode=mode)


def resize_bilinear_planes(planes: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of (c, h, w) planes, half-pixel-center convention."""
    c, h, w = planes.shape
    if (h, w) == (out_h, out_w):
        return planes.copy()
    src_y = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    src_x = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(src_y).astype(int)
    x0 = np.floor(src_x).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (src_y - y0)[None, :, None]
    wx = (src_x - x0)[None, None, :]
    p00 = planes[:, y0][:, :, x0]
    p01 = planes[:, y0][:, :, x1]
    p10 = planes[:, y1][:, :, x0]
    p11 = planes[:, y1][:, :, x1]
    top = p00 * (1 - wx) + p01 * wx
    bot = p10 * (1 - wx) + p11 * wx
    return top * (1 - wy) + bot * wy


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = image.shape[:2]
    if (h, w) == (out_h, out_w):
        return image
    return np.asarray(Image.fromarray(image).resize((out_w, out_h), Image.BILINEAR), dtype=np.uint8)


def _check_tile_logits(logits: np.ndarray, patch: int, ctx: TileContext) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (NUM_CLASSES, patch, patch):
        raise InferenceError(
            f"backend returned shape {logits.shape} for tile at ({ctx.x}, {ctx.y}), "
            f"expected {(NUM_CLASSES, patch, patch)}"
        )
    if not np.isfinite(logits).all():
        raise InferenceError(f"backend returned non-finite logits for tile at ({ctx.x}, {ctx.y})")
    return logits


def run_tiled(image: np.ndarray, backend, grid: TileGrid, scale: float = 1.0,
              jobs: int = 1) -> LogitMap:
    """Evaluate every tile and mean-accumulate logits over the image.

    Evaluation may be concurrent (when the backend allows it); the
    accumulation itself walks tiles in row-major order.
    """
    padded = reflect_pad_image(image, grid.padded_height, grid.padded_width)
    acc = LogitMap(width=grid.padded_width, height=grid.padded_height)
    contexts = [TileContext(x=x, y=y, scale=scale) for x, y in grid.positions]

    def evaluate(ctx: TileContext) -> np.ndarray:
        tile = padded[ctx.y:ctx.y + grid.patch, ctx.x:ctx.x + grid.patch]
        try:
            logits = backend.evaluate(tile, ctx)
        except Exception as exc:
            raise InferenceError(f"backend failed on tile at ({ctx.x}, {ctx.y}): {exc}") from exc
        return _check_tile_logits(logits, grid.patch, ctx)

    concurrent_ok = bool(getattr(backend, "concurrent_safe", False))
    if jobs > 1 and concurrent_ok and len(contexts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(evaluate, contexts)  # ordered: row-major accumulation
            for ctx, logits in zip(contexts, results):
                acc.add_tile(ctx.x, ctx.y, logits)
    else:
        for ctx in contexts:
            acc.add_tile(ctx.x, ctx.y, evaluate(ctx))

    if grid.padded:
        out = LogitMap(width=grid.image_width, height=grid.image_height)
        out.scores = acc.scores[:, :grid.image_height, :grid.image_width].copy()
        out.counts = acc.counts[:grid.image_height, :grid.image_width].copy()
        return out
    return acc


def multiscale_infer(
    image: np.ndarray,
    backend,
    scales=DEFAULT_SCALES,
    patch: int = DEFAULT_PATCH,
    overlap: int = DEFAULT_OVERLAP,
    jobs: int = 1,
    return_logits: bool = False,
):
    """Average per-scale logit maps and argmax; returns LabelMask (and the
    averaged LogitMap when asked)."""
    scales = list(scales)
    if not scales:
        raise InferenceError("need at least one scale")
    h, w = image.shape[:2]
    total = np.zeros((NUM_CLASSES, h, w), dtype=np.float64)
    for scale in scales:
        sh, sw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
        scaled = resize_image(image, sh, sw)
        grid = plan_tiles(sw, sh, patch=patch, overlap=overlap)
        start_scale = getattr(backend, "start_scale", None)
        if start_scale is not None:
            start_scale(scale, (sh, sw), (grid.padded_height, grid.padded_width))
        logit_map = run_tiled(scaled, backend, grid, scale=scale, jobs=jobs)
        scores = logit_map.finalized()
        total += resize_bilinear_planes(scores, h, w)
    total /= len(scales)
    mask = LabelMask.from_array(np.argmax(total, axis=0).astype(np.uint8))
    if return_logits:
        merged = LogitMap(width=w, height=h)
        merged.scores = total
        merged.counts = np.ones((h, w), dtype=np.int32)
        return mask, merged
    return mask


# ---------------------------------------------------------------------------
# .lgt logit files: "LGT1", u32-LE width/height/classes, f32-LE class-major


def save_logits(path, scores: np.ndarray) -> None:
    c, h, w = scores.shape
    with open(path, "wb") as fh:
        fh.write(LGT_MAGIC)
        fh.write(struct.pack("<III", w, h, c))
        fh.write(np.ascontiguousarray(scores, dtype="<f4").tobytes())


def load_logits(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != LGT_MAGIC:
            raise InferenceError(f"bad logit file magic {magic!r}")
        w, h, c = struct.unpack("<III", fh.read(12))
        data = fh.read(c * h * w * 4)
        if len(data) != c * h * w * 4:
            raise InferenceError(
                f"truncated logit file: expected {c * h * w * 4} payload bytes, got {len(data)}"
            )
        return np.frombuffer(data, dtype="<f4").reshape(c, h, w).astype(np.float64)
