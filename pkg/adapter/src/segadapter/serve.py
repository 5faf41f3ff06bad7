"""The protocol loop: read requests on stdin, answer on stdout.

Startup emits a handshake frame. Malformed frames get an error frame
and the reader resynchronizes at the next magic; internal model
failures get an error frame and the loop continues. Standard output
carries nothing but frames; all logging goes to stderr.
"""

from __future__ import annotations

import logging
import sys
from typing import BinaryIO

from .models import AdapterConfig, TilePredictor
from .wire import (
    BadChannelCount,
    Request,
    StreamReader,
    WireError,
    encode_error,
    encode_handshake,
    encode_response,
    FLAG_CONCURRENT_SAFE,
)

logger = logging.getLogger("segadapter")


def serve(config: AdapterConfig, stdin: BinaryIO | None = None,
          stdout: BinaryIO | None = None) -> int:
    """Run until the input stream closes; returns an exit code."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer

    try:
        predictor = TilePredictor(config)
    except Exception as exc:
        logger.error("cannot load model: %s", exc)
        return 1
    logger.info("serving model %r on %s (patch=%s)", config.model, config.device,
                config.patch if config.patch is not None else "any")

    flags = FLAG_CONCURRENT_SAFE if config.concurrent_safe else 0
    stdout.write(encode_handshake(flags))
    stdout.flush()

    reader = StreamReader(stdin)
    while True:
        try:
            frame = reader.read_frame()
        except WireError as exc:
            stdout.write(encode_error(str(exc)))
            stdout.flush()
            logger.warning("malformed input: %s", exc)
            if isinstance(exc, BadChannelCount):
                continue  # payload was consumed, stream is still aligned
            if not exc.recoverable or not reader.resync():
                logger.info("stream not recoverable, shutting down")
                return 0
            continue
        if frame is None:
            logger.info("input closed, shutting down")
            return 0
        if not isinstance(frame, Request):
            stdout.write(encode_error(f"unexpected {type(frame).__name__} frame"))
            stdout.flush()
            continue
        try:
            logits = predictor.predict(frame.pixels)
        except Exception as exc:  # noqa: BLE001 - any failure becomes an error frame
            stdout.write(encode_error(f"inference failed: {exc}"))
            stdout.flush()
            logger.warning("inference failed: %s", exc)
            continue
        stdout.write(encode_response(logits))
        stdout.flush()
