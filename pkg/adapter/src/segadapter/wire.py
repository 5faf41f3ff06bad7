"""Stdio wire protocol framing (adapter-side implementation).

Byte layout, all integers little-endian:

  request   "SGT1" u32 width u32 height u8 channels(=3)  h*w*3 RGB8
  response  "SGL1" u32 width u32 height u32 classes      class-major f32
  error     "SGE1" u32 length                            UTF-8 message
  handshake "SGH1" u8 flags  (bit 0: concurrent-safe)

This module is self-contained on purpose: the adapter talks to the
segmentation pipeline only through these bytes.
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
ALL_MAGICS = (MAGIC_REQUEST, MAGIC_RESPONSE, MAGIC_ERROR, MAGIC_HANDSHAKE)

FLAG_CONCURRENT_SAFE = 0x01


class WireError(RuntimeError):
    def __init__(self, message: str, recoverable: bool = True):
        super().__init__(message)
        self.recoverable = recoverable


class BadChannelCount(WireError):
    """Request header carried channels != 3; payload length was still known."""


@dataclass
class Request:
    pixels: np.ndarray  # (h, w, 3) uint8


@dataclass
class Response:
    logits: np.ndarray  # (classes, h, w) float32


@dataclass
class Error:
    message: str


@dataclass
class Handshake:
    flags: int


def encode_response(logits: np.ndarray) -> bytes:
    lg = np.ascontiguousarray(logits, dtype="<f4")
    c, h, w = lg.shape
    return MAGIC_RESPONSE + struct.pack("<III", w, h, c) + lg.tobytes()


def encode_error(message: str) -> bytes:
    raw = message.encode("utf-8")
    return MAGIC_ERROR + struct.pack("<I", len(raw)) + raw


def encode_handshake(flags: int = 0) -> bytes:
    return MAGIC_HANDSHAKE + struct.pack("<B", flags & 0xFF)


def encode_request(pixels: np.ndarray) -> bytes:
    px = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w, _ = px.shape
    return MAGIC_REQUEST + struct.pack("<IIB", w, h, 3) + px.tobytes()


class StreamReader:
    """Frame decoder with resynchronization after malformed input."""

    def __init__(self, stream: BinaryIO):
        self._stream = stream
        self._eof = False

    def _read_exact(self, n: int, what: str) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = self._stream.read(remaining)
            if not chunk:
                self._eof = True
                raise WireError(f"stream ended inside {what} ({n - remaining}/{n} bytes)",
                                recoverable=False)
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    @property
    def at_eof(self) -> bool:
        return self._eof

    def read_frame(self):
        """Next frame, or None at a clean end of stream."""
        head = self._stream.read(4)
        if head == b"":
            self._eof = True
            return None
        if len(head) < 4:
            self._eof = True
            raise WireError(f"stream ended inside magic ({len(head)}/4 bytes)", recoverable=False)
        if head == MAGIC_REQUEST:
            w, h, ch = struct.unpack("<IIB", self._read_exact(9, "request header"))
            if ch != 3:
                # consume the declared payload so the stream stays aligned
                try:
                    self._read_exact(w * h * ch, "request payload")
                except WireError:
                    pass
                raise BadChannelCount(f"request field 'channels' must be 3, got {ch}")
            payload = self._read_exact(w * h * 3, "request payload")
            return Request(pixels=np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3))
        if head == MAGIC_RESPONSE:
            w, h, c = struct.unpack("<III", self._read_exact(12, "response header"))
            payload = self._read_exact(c * h * w * 4, "response payload")
            return Response(logits=np.frombuffer(payload, dtype="<f4").reshape(c, h, w))
        if head == MAGIC_ERROR:
            (n,) = struct.unpack("<I", self._read_exact(4, "error header"))
            return Error(message=self._read_exact(n, "error payload").decode("utf-8"))
        if head == MAGIC_HANDSHAKE:
            (flags,) = struct.unpack("<B", self._read_exact(1, "handshake flags"))
            return Handshake(flags=flags)
        raise WireError(f"bad magic {head!r}")

    def resync(self) -> bool:
        """Scan byte-by-byte until the next known magic; True if one was found.

        Best-effort: payload bytes that happen to spell a magic will fool
        the scan, so senders should stop emitting garbage after an error.
        """
        window = b""
        while True:
            b1 = self._stream.read(1)
            if not b1:
                self._eof = True
                return False
            window = (window + b1)[-4:]
            if window in ALL_MAGICS:
                self._pushback(window)
                return True

    def _pushback(self, magic: bytes) -> None:
        # wrap the stream so the magic is read again by the next read_frame
        import io

        rest = self._stream
        self._stream = _Concat(io.BytesIO(magic), rest)


class _Concat:
    def __init__(self, first, second):
        self._first = first
        self._second = second

    def read(self, n: int) -> bytes:
        out = self._first.read(n)
        if len(out) < n:
            out += self._second.read(n - len(out))
        return out
