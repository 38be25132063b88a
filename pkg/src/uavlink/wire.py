"""Bit-exact wire formats for the UAV link.

Three frame kinds travel between the ground station and the UAV:

* 20-byte command frame: frame id plus four normalized stick values
  (roll, pitch, yaw, thrust), each an IEEE-754 single, big-endian.
* 20-byte video segment header: fixed-width big-endian fields in the order
  stream_epoch (u16), frame_seq (u32), segment_index (u16),
  segment_count (u16), capture_ts (u64 microseconds), payload_len (u16).
* 12-byte timestamp beacon: beacon_ts (u64 microseconds), refresh_seq (u32).

Decoders never raise on arbitrary bytes except via the classified errors
below; encoders reject invalid field values.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

STICK_MAX = 32767  # full positive deflection of a signed 16-bit axis

CC_FRAME_LEN = 20
SEGMENT_HEADER_LEN = 20
BEACON_LEN = 12

_CC = struct.Struct(">I4f")
_SEG = struct.Struct(">HIHHQH")
_BEACON = struct.Struct(">QI")

_U16 = (1 << 16) - 1
_U32 = (1 << 32) - 1
_U64 = (1 << 64) - 1


class WireError(ValueError):
    """Base class for wire codec failures."""


class EncodeError(WireError):
    """Field values violate the frame's invariants; nothing was encoded."""


class MalformedFrameError(WireError):
    """Byte sequence has the wrong length for the frame kind."""


class CorruptFrameError(WireError):
    """Correct length but decoded field values violate invariants."""


def single_precision(x: float) -> float:
    """Round ``x`` to the nearest IEEE-754 single (the on-wire precision)."""
    return struct.unpack(">f", struct.pack(">f", x))[0]


def normalize_stick(raw: int) -> float:
    """Map a signed 16-bit joystick axis to [-1, 1].

    Affine with 0 -> 0.0 and 32767 -> +1.0; -32768 lands just below -1 and is
    clamped, so full negative deflection reads exactly -1.0.
    """
    v = raw / STICK_MAX
    if v > 1.0:
        return 1.0
    if v < -1.0:
        return -1.0
    return v


@dataclass(frozen=True)
class CcFrame:
    """One stick-command sample: frame id plus four normalized values."""

    frame_id: int
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    thrust: float = 0.0

    def movement_values(self) -> tuple[float, float, float, float]:
        return (self.roll, self.pitch, self.yaw, self.thrust)


@dataclass(frozen=True)
class VideoSegmentHeader:
    """Fixed header carried by every network segment of a video frame."""

    stream_epoch: int
    frame_seq: int
    segment_index: int
    segment_count: int
    capture_ts: int  # sender-local microseconds at frame capture
    payload_len: int


@dataclass(frozen=True)
class TimestampBeacon:
    """On-screen timestamp beacon (sender-local display time)."""

    beacon_ts: int
    refresh_seq: int


def _check_movement(name: str, v: float) -> None:
    if not math.isfinite(v) or v < -1.0 or v > 1.0:
        raise EncodeError(f"{name}={v!r} outside [-1, 1]")


def encode_cc(frame: CcFrame) -> bytes:
    """Encode to exactly 20 bytes: u32 frame_id then four f32 stick values."""
    if not 0 <= frame.frame_id <= _U32:
        raise EncodeError(f"frame_id={frame.frame_id} outside unsigned 32-bit range")
    for name, v in zip(("roll", "pitch", "yaw", "thrust"), frame.movement_values()):
        _check_movement(name, v)
    return _CC.pack(frame.frame_id, frame.roll, frame.pitch, frame.yaw, frame.thrust)


def decode_cc(data: bytes) -> CcFrame:
    """Inverse of :func:`encode_cc`; values come back single-precision."""
    if len(data) != CC_FRAME_LEN:
        raise MalformedFrameError(f"command frame must be {CC_FRAME_LEN} bytes, got {len(data)}")
    frame_id, roll, pitch, yaw, thrust = _CC.unpack(data)
    for name, v in zip(("roll", "pitch", "yaw", "thrust"), (roll, pitch, yaw, thrust)):
        if not math.isfinite(v) or v < -1.0 or v > 1.0:
            raise CorruptFrameError(f"decoded {name}={v!r} outside [-1, 1]")
    return CcFrame(frame_id, roll, pitch, yaw, thrust)


def _check_segment_fields(h: VideoSegmentHeader, exc: type[WireError]) -> None:
    for name, v, hi in (
        ("stream_epoch", h.stream_epoch, _U16),
        ("frame_seq", h.frame_seq, _U32),
        ("segment_index", h.segment_index, _U16),
        ("segment_count", h.segment_count, _U16),
        ("capture_ts", h.capture_ts, _U64),
        ("payload_len", h.payload_len, _U16),
    ):
        if not 0 <= v <= hi:
            raise exc(f"{name}={v} out of range")
    if h.segment_count < 1:
        raise exc("segment_count must be >= 1")
    if h.segment_index >= h.segment_count:
        raise exc(f"segment_index {h.segment_index} >= segment_count {h.segment_count}")
    if h.payload_len == 0 and h.segment_index != h.segment_count - 1:
        raise exc("zero payload_len only allowed in the final segment")


def encode_segment_header(header: VideoSegmentHeader) -> bytes:
    _check_segment_fields(header, EncodeError)
    return _SEG.pack(
        header.stream_epoch,
        header.frame_seq,
        header.segment_index,
        header.segment_count,
        header.capture_ts,
        header.payload_len,
    )


def decode_segment_header(data: bytes) -> VideoSegmentHeader:
    if len(data) != SEGMENT_HEADER_LEN:
        raise MalformedFrameError(
            f"segment header must be {SEGMENT_HEADER_LEN} bytes, got {len(data)}"
        )
    h = VideoSegmentHeader(*_SEG.unpack(data))
    _check_segment_fields(h, CorruptFrameError)
    return h


def encode_beacon(beacon: TimestampBeacon) -> bytes:
    if not 0 <= beacon.beacon_ts <= _U64:
        raise EncodeError(f"beacon_ts={beacon.beacon_ts} out of range")
    if not 0 <= beacon.refresh_seq <= _U32:
        raise EncodeError(f"refresh_seq={beacon.refresh_seq} out of range")
    return _BEACON.pack(beacon.beacon_ts, beacon.refresh_seq)


def decode_beacon(data: bytes) -> TimestampBeacon:
    if len(data) != BEACON_LEN:
        raise MalformedFrameError(f"beacon must be {BEACON_LEN} bytes, got {len(data)}")
    return TimestampBeacon(*_BEACON.unpack(data))
