import json
import math
import random
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from uavlink import wire
from uavlink.wire import (
    CcFrame,
    CorruptFrameError,
    EncodeError,
    MalformedFrameError,
    TimestampBeacon,
    VideoSegmentHeader,
    decode_beacon,
    decode_cc,
    decode_segment_header,
    encode_beacon,
    encode_cc,
    encode_segment_header,
    normalize_stick,
    single_precision,
)

VECTORS = Path(__file__).parent / "vectors" / "wire_golden.txt"


def test_normalize_center_and_full_deflection():
    assert normalize_stick(0) == 0.0
    assert normalize_stick(32767) == 1.0
    assert normalize_stick(-32768) == -1.0


def test_normalize_is_monotone_and_bounded():
    prev = -2.0
    for raw in range(-32768, 32768, 257):
        v = normalize_stick(raw)
        assert -1.0 <= v <= 1.0
        assert v >= prev
        prev = v


def test_encode_all_zero_frame_is_20_zero_bytes():
    assert encode_cc(CcFrame(0)) == bytes(20)


def test_encode_roll_one():
    data = encode_cc(CcFrame(1, roll=1.0))
    assert data.hex() == "000000013f800000" + "00" * 12
    assert len(data) == wire.CC_FRAME_LEN


def test_encode_rejects_out_of_range_movement():
    with pytest.raises(EncodeError):
        encode_cc(CcFrame(0, roll=1.0000001))
    with pytest.raises(EncodeError):
        encode_cc(CcFrame(0, thrust=float("nan")))
    with pytest.raises(EncodeError):
        encode_cc(CcFrame(-1))


def test_decode_wrong_length_is_malformed():
    with pytest.raises(MalformedFrameError):
        decode_cc(bytes(19))
    with pytest.raises(MalformedFrameError):
        decode_cc(bytes(21))


def test_decode_out_of_range_is_corrupt():
    import struct

    data = struct.pack(">I4f", 0, 2.0, 0, 0, 0)
    with pytest.raises(CorruptFrameError):
        decode_cc(data)
    data = struct.pack(">I4f", 0, float("inf"), 0, 0, 0)
    with pytest.raises(CorruptFrameError):
        decode_cc(data)


def test_decode_all_zero_bytes():
    assert decode_cc(bytes(20)) == CcFrame(0)


def test_cc_round_trip_10k_random_frames():
    rng = random.Random(0xC0FFEE)
    for _ in range(10_000):
        frame = CcFrame(
            rng.randrange(2**32),
            *(single_precision(rng.uniform(-1, 1)) for _ in range(4)),
        )
        assert decode_cc(encode_cc(frame)) == frame


@given(
    frame_id=st.integers(0, 2**32 - 1),
    vals=st.lists(st.floats(-1.0, 1.0, allow_nan=False, width=32), min_size=4, max_size=4),
)
def test_cc_round_trip_property(frame_id, vals):
    frame = CcFrame(frame_id, *vals)
    assert decode_cc(encode_cc(frame)) == frame


def _random_header(rng):
    count = rng.randint(1, 2**16 - 1)
    idx = rng.randint(0, count - 1)
    payload = rng.randint(0, 2**16 - 1) if idx == count - 1 else rng.randint(1, 2**16 - 1)
    return VideoSegmentHeader(
        stream_epoch=rng.randrange(2**16),
        frame_seq=rng.randrange(2**32),
        segment_index=idx,
        segment_count=count,
        capture_ts=rng.randrange(2**64),
        payload_len=payload,
    )


def test_segment_header_round_trip_10k():
    rng = random.Random(0xBEEF)
    for _ in range(10_000):
        h = _random_header(rng)
        data = encode_segment_header(h)
        assert len(data) == wire.SEGMENT_HEADER_LEN
        assert decode_segment_header(data) == h


def test_segment_header_rejects_zero_count():
    h = VideoSegmentHeader(0, 0, 0, 0, 0, 10)
    with pytest.raises(EncodeError):
        encode_segment_header(h)
    with pytest.raises(CorruptFrameError):
        decode_segment_header(bytes(wire.SEGMENT_HEADER_LEN))  # all-zero: count 0


def test_segment_header_rejects_index_past_count():
    h = VideoSegmentHeader(0, 0, 5, 5, 0, 10)
    with pytest.raises(EncodeError):
        encode_segment_header(h)


def test_segment_header_rejects_wrong_length():
    with pytest.raises(MalformedFrameError):
        decode_segment_header(bytes(wire.SEGMENT_HEADER_LEN - 1))


def test_beacon_round_trip():
    rng = random.Random(0xF00D)
    for _ in range(10_000):
        b = TimestampBeacon(rng.randrange(2**64), rng.randrange(2**32))
        data = encode_beacon(b)
        assert len(data) == wire.BEACON_LEN
        assert decode_beacon(data) == b


@given(st.binary(min_size=0, max_size=64))
def test_decoders_never_raise_unclassified_errors(data):
    for decoder in (decode_cc, decode_segment_header, decode_beacon):
        try:
            decoder(data)
        except wire.WireError:
            pass


def test_golden_vectors():
    codecs = {
        "cc": (lambda d: CcFrame(**d), encode_cc, decode_cc),
        "seg": (lambda d: VideoSegmentHeader(**d), encode_segment_header, decode_segment_header),
        "beacon": (lambda d: TimestampBeacon(**d), encode_beacon, decode_beacon),
    }
    checked = 0
    for line in VECTORS.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        kind, hexdump, fields_json = line.split(" ", 2)
        build, encode, decode = codecs[kind]
        obj = build(json.loads(fields_json))
        assert encode(obj).hex() == hexdump
        decoded = decode(bytes.fromhex(hexdump))
        assert decoded == obj
        checked += 1
    assert checked >= 8
