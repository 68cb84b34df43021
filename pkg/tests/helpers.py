"""Independent oracles shared across test modules.

Everything here is written from scratch in plain Python (no numpy, no
imports from the package under test beyond plain data) so it can serve as
an independent reference implementation.
"""
from __future__ import annotations

import math

I16_MIN = -32768
I16_MAX = 32767


def rha(x: float) -> int:
    """Round half away from zero, the wire rounding rule."""
    if x >= 0:
        return math.floor(x + 0.5)
    return -math.floor(-x + 0.5)


def brute_scale(samples, gain: float) -> list[int]:
    return [rha(s * gain) for s in samples]


def brute_mix(listener_id: int, frames: dict[int, list[int]],
              gain_of) -> list[int]:
    """Per-sample reference mixer: scale, round, accumulate, clamp last.

    `gain_of(listener_id, source_id)` supplies the gain for each pair.
    """
    length = len(next(iter(frames.values())))
    out = []
    for i in range(length):
        acc = 0
        for source_id, samples in frames.items():
            acc += rha(samples[i] * gain_of(listener_id, source_id))
        out.append(max(I16_MIN, min(I16_MAX, acc)))
    return out


def brute_default_gain(listener_section: str, listener_id: int,
                       source_section: str, source_id: int,
                       g_self=0.8, g_own=1.0, g_other=0.7, g_cond=1.0) -> float:
    """Reference restatement of the section-aware default gain rule."""
    assert source_section != "listener"
    if source_id == listener_id:
        return g_self
    if source_section == "conductor":
        return g_cond
    if source_section == listener_section:
        return g_own
    return g_other


def be(value: int, width: int) -> bytes:
    return value.to_bytes(width, "big")


def brute_encode_datagram(seq: int, timestamp_us: int, samples: list[int],
                          frame_size: int, channels: int, client_id: int,
                          flags: int = 0) -> bytes:
    """Reference datagram encoder built from int.to_bytes only."""
    header = (b"NMPA" + be(1, 1) + be(flags, 1) + be(client_id, 2)
              + be(seq, 4) + be(timestamp_us, 8) + be(frame_size, 2)
              + be(channels, 1) + be(0, 1))
    payload = b"".join((s & 0xFFFF).to_bytes(2, "little") for s in samples)
    return header + payload
