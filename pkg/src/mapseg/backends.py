"""Segmentation backends: ground-truth oracle, color heuristic, external process.

A backend maps an RGB tile (patch x patch x 3) to per-class logits
(6 x patch x patch). The oracle replays stored ground truth and exists
so the whole pipeline can be verified without a trained model; the
heuristic scores pixels by per-class color log-density; the external
backend drives any process speaking the wire protocol on stdio.
"""

from __future__ import annotations

import os
import selectors
import shlex
import subprocess
import threading
import time
from typing import Mapping

import numpy as np

from .classes import NUM_CLASSES, LabelMask, mask_data
from .colors import ColorModel
from .inference import TileContext, reflect_pad_image, resize_bilinear_planes
from .wire import (
    BackendDeadError,
    ErrorFrame,
    FrameReader,
    HandshakeFrame,
    ProtocolError,
    RequestFrame,
    ResponseFrame,
    encode_frame,
)

DEFAULT_ORACLE_LOGIT = 10.0


class BackendError(RuntimeError):
    pass


class SegmentationBackend:
    """Base contract: evaluate() one tile; flags say if calls may overlap."""

    concurrent_safe: bool = False

    def evaluate(self, tile: np.ndarray, ctx: TileContext | None = None) -> np.ndarray:
        raise NotImplementedError

    def start_scale(self, scale: float, scaled_hw: tuple[int, int],
                    padded_hw: tuple[int, int]) -> None:
        """Called by the driver before tiles of a new scale; optional."""

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class OracleBackend(SegmentationBackend):
    """One-hot logits straight from ground truth.

    At native scale the true class scores +`logit_scale` and the rest 0.
    For reduced scales the one-hot planes are bilinearly resized to the
    scaled geometry, which keeps the multiscale argmax exactly equal to
    the stored mask for any mask content. Optional Gaussian noise (sigma)
    supports robustness tests; the noise stream is a pure function of
    (seed, tile position, scale).
    """

    concurrent_safe = True

    def __init__(self, mask: LabelMask | np.ndarray | Mapping[tuple[int, int], np.ndarray],
                 logit_scale: float = DEFAULT_ORACLE_LOGIT,
                 noise_sigma: float = 0.0, seed: int = 0):
        self.logit_scale = float(logit_scale)
        self.noise_sigma = float(noise_sigma)
        self.seed = int(seed)
        self._store: dict[tuple[int, int], np.ndarray] | None = None
        self._planes_cache: dict[tuple, np.ndarray] = {}
        if isinstance(mask, Mapping):
            self._store = {k: mask_data(v) for k, v in mask.items()}
            self._mask = None
        else:
            self._mask = mask_data(mask)
            self._planes_cache[(1.0, self._mask.shape, self._mask.shape)] = self._one_hot(self._mask)

    def _one_hot(self, mask: np.ndarray) -> np.ndarray:
        planes = np.zeros((NUM_CLASSES,) + mask.shape, dtype=np.float64)
        for k in range(NUM_CLASSES):
            planes[k][mask == k] = self.logit_scale
        return planes

    def start_scale(self, scale, scaled_hw, padded_hw):
        if self._mask is None:
            return
        key = (float(scale), tuple(scaled_hw), tuple(padded_hw))
        if key in self._planes_cache:
            return
        planes = self._one_hot(self._mask)
        if tuple(scaled_hw) != self._mask.shape:
            planes = resize_bilinear_planes(planes, scaled_hw[0], scaled_hw[1])
        if tuple(padded_hw) != tuple(scaled_hw):
            planes = np.stack([
                reflect_pad_image(p, padded_hw[0], padded_hw[1]) for p in planes
            ])
        self._planes_cache[key] = planes

    def _planes_for(self, ctx: TileContext, patch: int) -> np.ndarray:
        for (scale, _, padded_hw), planes in self._planes_cache.items():
            if scale == ctx.scale and padded_hw[0] >= ctx.y + patch and padded_hw[1] >= ctx.x + patch:
                return planes
        raise BackendError(
            f"oracle has no stored mask covering tile at ({ctx.x}, {ctx.y}) scale {ctx.scale}"
        )

    def evaluate(self, tile: np.ndarray, ctx: TileContext | None = None) -> np.ndarray:
        patch = tile.shape[0]
        ctx = ctx or TileContext(0, 0, 1.0)
        if self._store is not None:
            crop = self._store.get((ctx.x, ctx.y))
            if crop is None:
                raise BackendError(f"oracle store does not cover tile at ({ctx.x}, {ctx.y})")
            logits = self._one_hot(crop)
        else:
            planes = self._planes_for(ctx, patch)
            logits = planes[:, ctx.y:ctx.y + patch, ctx.x:ctx.x + patch].copy()
        if self.noise_sigma > 0:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=(self.seed, ctx.x, ctx.y, int(ctx.scale * 1e9)))
            )
            logits = logits + rng.normal(0.0, self.noise_sigma, size=logits.shape)
        return logits


class HeuristicBackend(SegmentationBackend):
    """logit_k = log-density of the pixel color under class k's mixture."""

    concurrent_safe = True

    def __init__(self, colors: ColorModel):
        missing = [k for k in range(NUM_CLASSES) if k not in colors]
        if missing:
            raise BackendError(f"color model missing classes {missing}")
        self.colors = colors

    def evaluate(self, tile: np.ndarray, ctx: TileContext | None = None) -> np.ndarray:
        h, w = tile.shape[:2]
        flat = tile.reshape(-1, 3).astype(np.float64)
        logits = np.empty((NUM_CLASSES, h, w), dtype=np.float64)
        for k in range(NUM_CLASSES):
            logits[k] = self.colors.mixture(k).log_density(flat).reshape(h, w)
        return logits


class _PipeStream:
    """File-like over a pipe fd with a per-call deadline."""

    def __init__(self, fileobj, timeout: float | None):
        self._fileobj = fileobj
        self._fd = fileobj.fileno()
        self._timeout = timeout
        self.deadline: float | None = None
        os.set_blocking(self._fd, False)
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._fileobj, selectors.EVENT_READ)

    def arm(self) -> None:
        self.deadline = (time.monotonic() + self._timeout) if self._timeout else None

    def read(self, n: int) -> bytes:
        while True:
            wait = None
            if self.deadline is not None:
                wait = self.deadline - time.monotonic()
                if wait <= 0:
                    raise TimeoutError("timed out waiting for backend response")
            ready = self._sel.select(wait)
            if not ready:
                raise TimeoutError("timed out waiting for backend response")
            try:
                data = os.read(self._fd, n)
            except BlockingIOError:
                continue
            return data  # may be short or b"" on EOF; FrameReader copes

    def close(self) -> None:
        self._sel.close()


class ExternBackend(SegmentationBackend):
    """Drives a subprocess speaking the wire protocol over stdin/stdout.

    Calls are serialized behind a lock (one pipe); the handshake frame,
    if the process sends one, sets `concurrent_safe` for the driver.
    """

    def __init__(self, command: str | list[str], timeout: float | None = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.concurrent_safe = False
        self._proc: subprocess.Popen | None = None
        self._reader: FrameReader | None = None
        self._stream: _PipeStream | None = None
        self._lock = threading.Lock()

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=None
        )
        self._stream = _PipeStream(self._proc.stdout, self.timeout)
        self._reader = FrameReader(self._stream)

    def _next_frame(self):
        try:
            frame = self._reader.read_frame()
        except ProtocolError:
            code = self._proc.poll()
            if code is not None:
                raise BackendDeadError(
                    f"backend process exited with code {code} mid-stream"
                ) from None
            raise
        if frame is None:
            code = self._proc.poll()
            raise BackendDeadError(
                f"backend process closed its output (exit code {code})"
            )
        return frame

    def evaluate(self, tile: np.ndarray, ctx: TileContext | None = None) -> np.ndarray:
        with self._lock:
            self._ensure_started()
            payload = encode_frame(RequestFrame(pixels=np.ascontiguousarray(tile, dtype=np.uint8)))
            try:
                self._proc.stdin.write(payload)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                code = self._proc.poll()
                raise BackendDeadError(f"backend process is gone (exit code {code}): {exc}") from exc
            self._stream.arm()
            while True:
                frame = self._next_frame()
                if isinstance(frame, HandshakeFrame):
                    self.concurrent_safe = frame.concurrent_safe
                    continue
                if isinstance(frame, ErrorFrame):
                    raise BackendError(frame.message)
                if isinstance(frame, ResponseFrame):
                    return frame.logits.astype(np.float64)
                raise ProtocolError(f"unexpected frame {type(frame).__name__} from backend")

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        if self._stream is not None:
            self._stream.close()
        self._proc = None


def oracle_backend(mask, **kwargs) -> OracleBackend:
    return OracleBackend(mask, **kwargs)


def heuristic_backend(colors: ColorModel) -> HeuristicBackend:
    return HeuristicBackend(colors)


def extern_backend(command, **kwargs) -> ExternBackend:
    return ExternBackend(command, **kwargs)
