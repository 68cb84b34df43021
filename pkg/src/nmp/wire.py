"""Bit-exact wire encoding for audio datagrams and control messages.

Datagram header integers are big-endian (network order); PCM payload samples
are little-endian int16 (PCM convention).  Control messages are
length-prefixed UTF-8 JSON documents over the reliable ordered channel; the
browser console consumes the exact same documents.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .audio import VALID_CHANNELS, VALID_FRAME_SIZES, AudioFrame
from .errors import MalformedMagic, ProtocolError, TruncatedPayload, UnsupportedVersion

MAGIC = b"NMPA"
VERSION = 1
HEADER = struct.Struct(">4sBBHIQHBB")
HEADER_LEN = HEADER.size  # 24

FLAG_PROBE = 0x01

MAX_CONTROL_LEN = 1 << 20  # 1 MiB
LENGTH_PREFIX = struct.Struct(">I")

# Required fields per control message type.
CONTROL_TYPES: dict[str, tuple[str, ...]] = {
    "join": ("name", "section", "role"),
    "welcome": ("client_id", "session"),
    "roster": ("clients",),
    "set_gain": ("listener_id", "source_id", "gain"),
    "gain_state": ("listener_id", "source_id", "gain"),
    "ping": ("t0_us",),
    "pong": ("t0_us", "t1_us"),
    "leave": (),
    "error": ("code", "message"),
    "gateway_hello": (),
    "stats": ("clients",),
    "console_hello": (),
}


def encode_datagram(frame: AudioFrame, client_id: int, flags: int = 0) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, flags, client_id, frame.seq,
                         frame.timestamp_us, frame.frame_size, frame.channels, 0)
    return header + frame.samples.astype("<i2").tobytes()


def decode_datagram(data: bytes) -> tuple[AudioFrame, int, int]:
    """Decode a datagram; returns (frame, client_id, flags)."""
    if len(data) < HEADER_LEN:
        raise TruncatedPayload(f"datagram shorter than header ({len(data)} bytes)")
    (magic, version, flags, client_id, seq, timestamp_us,
     frame_samples, channels, _reserved) = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    if frame_samples not in VALID_FRAME_SIZES or channels not in VALID_CHANNELS:
        raise ProtocolError(f"invalid frame geometry {frame_samples}x{channels}")
    expected = HEADER_LEN + 2 * frame_samples * channels
    if len(data) != expected:
        raise TruncatedPayload(f"datagram length {len(data)}, expected {expected}")
    samples = np.frombuffer(data, dtype="<i2", offset=HEADER_LEN).astype(np.int16)
    frame = AudioFrame(seq, timestamp_us, samples, frame_samples, channels)
    return frame, client_id, flags


def validate_control(msg: dict) -> dict:
    if not isinstance(msg, dict):
        raise ProtocolError("control message must be an object")
    msg_type = msg.get("type")
    if msg_type not in CONTROL_TYPES:
        raise ProtocolError(f"unknown control message type {msg_type!r}")
    for required in CONTROL_TYPES[msg_type]:
        if required not in msg:
            raise ProtocolError(f"{msg_type} message missing field {required!r}")
    if msg_type in ("set_gain", "gain_state"):
        gain = msg["gain"]
        if not isinstance(gain, (int, float)) or not 0.0 <= gain <= 4.0:
            raise ProtocolError(f"gain {gain!r} outside [0, 4]")
    return msg


def encode_control(msg: dict) -> bytes:
    validate_control(msg)
    body = json.dumps(msg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_CONTROL_LEN:
        raise ProtocolError(f"control message too large ({len(body)} bytes)")
    return LENGTH_PREFIX.pack(len(body)) + body


def decode_control(data: bytes) -> dict:
    """Decode one complete length-prefixed control message."""
    if len(data) < LENGTH_PREFIX.size:
        raise TruncatedPayload("control message shorter than length prefix")
    (length,) = LENGTH_PREFIX.unpack_from(data)
    if length > MAX_CONTROL_LEN:
        raise ProtocolError(f"control length prefix {length} exceeds 1 MiB")
    body = data[LENGTH_PREFIX.size:]
    if len(body) != length:
        raise TruncatedPayload(f"control body length {len(body)}, prefix says {length}")
    try:
        msg = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"control body is not valid JSON: {exc}") from None
    return validate_control(msg)


class ControlStreamDecoder:
    """Incremental decoder for control messages arriving over a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[dict]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < LENGTH_PREFIX.size:
                break
            (length,) = LENGTH_PREFIX.unpack_from(self._buf)
            if length > MAX_CONTROL_LEN:
                raise ProtocolError(f"control length prefix {length} exceeds 1 MiB")
            total = LENGTH_PREFIX.size + length
            if len(self._buf) < total:
                break
            out.append(decode_control(bytes(self._buf[:total])))
            del self._buf[:total]
        return out
