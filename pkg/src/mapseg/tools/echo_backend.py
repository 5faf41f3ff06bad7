"""Fixture backend process for exercising the wire protocol end to end.

Reads request frames from stdin and answers per --mode:

  constant   fixed logits: plane k gets --value minus k * --step
  mean       plane k gets the tile's mean intensity minus k (brightness echo)
  error      an error frame for every request
  truncate   a response header followed by half the payload, then exit
  silent     consume one request and exit without answering

Run as:  python -m mapseg.tools.echo_backend --mode constant
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ..wire import (
    ErrorFrame,
    FrameReader,
    HandshakeFrame,
    RequestFrame,
    ResponseFrame,
    encode_frame,
    MAGIC_RESPONSE,
)

import struct


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mode", choices=["constant", "mean", "error", "truncate", "silent"],
                    default="constant")
    ap.add_argument("--value", type=float, default=1.0)
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--classes", type=int, default=6)
    ap.add_argument("--handshake", action="store_true", help="emit SGH1 at startup")
    ap.add_argument("--concurrent", action="store_true", help="advertise concurrent-safe")
    args = ap.parse_args(argv)

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    if args.handshake:
        stdout.write(encode_frame(HandshakeFrame(flags=1 if args.concurrent else 0)))
        stdout.flush()

    reader = FrameReader(stdin)
    while True:
        frame = reader.read_frame()
        if frame is None:
            return 0
        if not isinstance(frame, RequestFrame):
            stdout.write(encode_frame(ErrorFrame(message=f"unexpected frame {type(frame).__name__}")))
            stdout.flush()
            continue
        h, w = frame.pixels.shape[:2]
        if args.mode == "error":
            stdout.write(encode_frame(ErrorFrame(message="synthetic backend failure")))
            stdout.flush()
            continue
        if args.mode == "silent":
            return 0
        if args.mode == "truncate":
            payload = np.zeros((args.classes, h, w), dtype="<f4").tobytes()
            stdout.write(MAGIC_RESPONSE + struct.pack("<III", w, h, args.classes))
            stdout.write(payload[: len(payload) // 2])
            stdout.flush()
            return 0
        if args.mode == "mean":
            base = float(frame.pixels.mean())
            logits = np.stack([
                np.full((h, w), base - k, dtype=np.float32) for k in range(args.classes)
            ])
        else:  # constant
            logits = np.stack([
                np.full((h, w), args.value - k * args.step, dtype=np.float32)
                for k in range(args.classes)
            ])
        stdout.write(encode_frame(ResponseFrame(logits=logits)))
        stdout.flush()


if __name__ == "__main__":
    raise SystemExit(main())
