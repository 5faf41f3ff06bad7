import io

import numpy as np
import pytest

from segadapter.wire import (
    BadChannelCount,
    Error,
    Handshake,
    Request,
    Response,
    StreamReader,
    WireError,
    encode_error,
    encode_handshake,
    encode_request,
    encode_response,
)


def reader_for(blob: bytes) -> StreamReader:
    return StreamReader(io.BytesIO(blob))


class TestFraming:
    def test_request_round_trip(self):
        px = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
        frame = reader_for(encode_request(px)).read_frame()
        assert isinstance(frame, Request)
        assert (frame.pixels == px).all()

    def test_response_round_trip(self):
        lg = np.random.default_rng(0).normal(size=(6, 4, 5)).astype("<f4")
        frame = reader_for(encode_response(lg)).read_frame()
        assert isinstance(frame, Response)
        assert frame.logits.tobytes() == lg.tobytes()

    def test_error_and_handshake(self):
        blob = encode_handshake(1) + encode_error("nope")
        r = reader_for(blob)
        h = r.read_frame()
        e = r.read_frame()
        assert isinstance(h, Handshake) and h.flags == 1
        assert isinstance(e, Error) and e.message == "nope"
        assert r.read_frame() is None

    def test_truncated_payload(self):
        raw = encode_response(np.zeros((6, 4, 4), dtype="<f4"))
        with pytest.raises(WireError, match="stream ended"):
            reader_for(raw[:-8]).read_frame()

    def test_bad_channel_count_keeps_alignment(self):
        px = np.zeros((2, 2, 3), dtype=np.uint8)
        bad = bytearray(encode_request(px))
        bad[12] = 4
        bad += b"\x00" * (2 * 2)  # the extra channel plane the header promises
        blob = bytes(bad) + encode_request(px)
        r = reader_for(blob)
        with pytest.raises(BadChannelCount, match="channels"):
            r.read_frame()
        follow_up = r.read_frame()
        assert isinstance(follow_up, Request)

    def test_resync_finds_next_magic(self):
        good = encode_request(np.zeros((1, 1, 3), dtype=np.uint8))
        blob = b"JUNKJUNKJUNK" + good
        r = reader_for(blob)
        with pytest.raises(WireError, match="bad magic"):
            r.read_frame()
        assert r.resync()
        assert isinstance(r.read_frame(), Request)

    def test_resync_at_eof_returns_false(self):
        r = reader_for(b"garbage without any magic")
        with pytest.raises(WireError):
            r.read_frame()
        assert not r.resync()
