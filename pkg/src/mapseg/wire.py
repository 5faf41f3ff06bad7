"""Binary framing for external segmentation backends.

Frames over a byte stream, all integers little-endian:

  request   "SGT1" u32 width u32 height u8 channels(=3)  then h*w*3 RGB8,
            row-major interleaved
  response  "SGL1" u32 width u32 height u32 classes(=6)  then
            classes*h*w float32, class-major
  error     "SGE1" u32 length  then UTF-8 message bytes
  handshake "SGH1" u8 flags    (bit 0: concurrent-safe); optional, sent
            by the process once at startup

Payload lengths must match headers exactly; anything else raises
ProtocolError naming the byte offset and the expected/received sizes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

MAGIC_REQUEST = b"SGT1"
MAGIC_RESPONSE = b"SGL1"
MAGIC_ERROR = b"SGE1"
MAGIC_HANDSHAKE = b"SGH1"

_MAGICS = (MAGIC_REQUEST, MAGIC_RESPONSE, MAGIC_ERROR, MAGIC_HANDSHAKE)

FLAG_CONCURRENT_SAFE = 0x01


class ProtocolError(RuntimeError):
    pass


class BackendDeadError(RuntimeError):
    pass


@dataclass
class RequestFrame:
    pixels: np.ndarray  # (h, w, 3) uint8


@dataclass
class ResponseFrame:
    logits: np.ndarray  # (classes, h, w) float32


@dataclass
class ErrorFrame:
    message: str


@dataclass
class HandshakeFrame:
    flags: int

    @property
    def concurrent_safe(self) -> bool:
        return bool(self.flags & FLAG_CONCURRENT_SAFE)


Frame = RequestFrame | ResponseFrame | ErrorFrame | HandshakeFrame


def encode_frame(frame: Frame) -> bytes:
    if isinstance(frame, RequestFrame):
        px = np.ascontiguousarray(frame.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"request pixels must be (h, w, 3), got {px.shape}")
        h, w, _ = px.shape
        return MAGIC_REQUEST + struct.pack("<IIB", w, h, 3) + px.tobytes()
    if isinstance(frame, ResponseFrame):
        lg = np.ascontiguousarray(frame.logits, dtype="<f4")
        if lg.ndim != 3:
            raise ValueError(f"response logits must be (classes, h, w), got {lg.shape}")
        c, h, w = lg.shape
        return MAGIC_RESPONSE + struct.pack("<III", w, h, c) + lg.tobytes()
    if isinstance(frame, ErrorFrame):
        msg = frame.message.encode("utf-8")
        return MAGIC_ERROR + struct.pack("<I", len(msg)) + msg
    if isinstance(frame, HandshakeFrame):
        return MAGIC_HANDSHAKE + struct.pack("<B", frame.flags & 0xFF)
    raise TypeError(f"not a frame: {frame!r}")


class FrameReader:
    """Incremental frame decoder over a binary stream; tracks byte offset."""

    def __init__(self, stream: BinaryIO):
        self._stream = stream
        self.offset = 0

    def _read_exact(self, n: int, what: str) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = self._stream.read(remaining)
            if not chunk:
                got = n - remaining
                raise ProtocolError(
                    f"truncated {what} at byte offset {self.offset + got}: "
                    f"expected {n} bytes, received {got}"
                )
            chunks.append(chunk)
            remaining -= len(chunk)
        self.offset += n
        return b"".join(chunks)

    def read_frame(self) -> Frame | None:
        """Next frame, or None at a clean end of stream."""
        start = self.offset
        head = self._stream.read(4)
        if head == b"":
            return None
        if len(head) < 4:
            self.offset += len(head)
            raise ProtocolError(
                f"truncated magic at byte offset {start}: expected 4 bytes, received {len(head)}"
            )
        self.offset += 4
        if head == MAGIC_REQUEST:
            w, h, ch = struct.unpack("<IIB", self._read_exact(9, "request header"))
            if ch != 3:
                raise ProtocolError(f"request at byte offset {start}: channels must be 3, got {ch}")
            payload = self._read_exact(w * h * 3, "request payload")
            px = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
            return RequestFrame(pixels=px)
        if head == MAGIC_RESPONSE:
            w, h, c = struct.unpack("<III", self._read_exact(12, "response header"))
            payload = self._read_exact(c * h * w * 4, "response payload")
            lg = np.frombuffer(payload, dtype="<f4").reshape(c, h, w)
            return ResponseFrame(logits=lg)
        if head == MAGIC_ERROR:
            (n,) = struct.unpack("<I", self._read_exact(4, "error header"))
            return ErrorFrame(message=self._read_exact(n, "error payload").decode("utf-8"))
        if head == MAGIC_HANDSHAKE:
            (flags,) = struct.unpack("<B", self._read_exact(1, "handshake flags"))
            return HandshakeFrame(flags=flags)
        raise ProtocolError(f"bad magic {head!r} at byte offset {start}")


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one frame from a byte string (must consume it all)."""
    import io

    reader = FrameReader(io.BytesIO(data))
    frame = reader.read_frame()
    if frame is None:
        raise ProtocolError("empty buffer")
    if reader.offset != len(data):
        raise ProtocolError(
            f"trailing bytes after frame: frame ended at {reader.offset}, buffer has {len(data)}"
        )
    return frame
