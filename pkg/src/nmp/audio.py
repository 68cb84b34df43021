"""Core audio types and the bit-exact personalized mixing engine.

All mixing is integer math: per-source samples are scaled by a linear gain,
rounded half away from zero, accumulated in 64-bit integers and clamped to
int16 at the very end.  This keeps mixes platform-independent and lets tests
compare streams bit-exactly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GainError, GeometryError

SAMPLE_RATE = 48_000
VALID_FRAME_SIZES = (64, 128, 256)
VALID_CHANNELS = (1, 2)

GAIN_MIN = 0.0
GAIN_MAX = 4.0

I16_MIN = -32768
I16_MAX = 32767


class Section(enum.Enum):
    """Voice section, with conductor and passive listener layered on top."""

    SOPRANO = "soprano"
    ALTO = "alto"
    TENOR = "tenor"
    BASS = "bass"
    CONDUCTOR = "conductor"
    LISTENER = "listener"

    @property
    def is_conductor(self) -> bool:
        return self is Section.CONDUCTOR

    @property
    def is_listener(self) -> bool:
        return self is Section.LISTENER

    @property
    def role(self) -> str:
        if self is Section.CONDUCTOR:
            return "conductor"
        if self is Section.LISTENER:
            return "listener"
        return "performer"


def frame_duration_ms(frame_size: int) -> float:
    """Duration of one frame in milliseconds at the fixed 48 kHz rate."""
    return frame_size / 48.0


def tick_time_us(epoch_us: int, tick: int, frame_size: int) -> int:
    """Time of tick N on an exact integer grid (no float drift)."""
    return epoch_us + (tick * frame_size * 1_000_000) // SAMPLE_RATE


@dataclass
class AudioFrame:
    """One fixed-size block of PCM samples; the unit of transport and mixing."""

    seq: int
    timestamp_us: int
    samples: np.ndarray
    frame_size: int
    channels: int = 1

    def __post_init__(self):
        if self.frame_size not in VALID_FRAME_SIZES:
            raise GeometryError(f"frame_size {self.frame_size} not in {VALID_FRAME_SIZES}")
        if self.channels not in VALID_CHANNELS:
            raise GeometryError(f"channels must be 1 or 2, got {self.channels}")
        self.samples = np.asarray(self.samples, dtype=np.int16)
        expected = self.frame_size * self.channels
        if self.samples.shape != (expected,):
            raise GeometryError(
                f"samples length {self.samples.shape} != frame_size*channels ({expected})"
            )

    @classmethod
    def silence(cls, seq: int, timestamp_us: int, frame_size: int, channels: int = 1):
        return cls(seq, timestamp_us, np.zeros(frame_size * channels, dtype=np.int16),
                   frame_size, channels)

    def same_geometry(self, other: "AudioFrame") -> bool:
        return self.frame_size == other.frame_size and self.channels == other.channels

    def is_silent(self) -> bool:
        return not self.samples.any()


def clamp_gain(gain: float) -> float:
    return min(max(float(gain), GAIN_MIN), GAIN_MAX)


def _round_half_away(values: np.ndarray) -> np.ndarray:
    # np.round rounds half to even; the wire contract is half away from zero.
    return (np.sign(values) * np.floor(np.abs(values) + 0.5)).astype(np.int64)


def scale_samples(samples: np.ndarray, gain: float) -> np.ndarray:
    """Scale int16 samples by a linear gain with round-half-away-from-zero.

    Returns int64 (unclamped) so callers can accumulate before saturating.
    """
    return _round_half_away(samples.astype(np.float64) * gain)


@dataclass
class DefaultGainParams:
    """Section-aware default gain rule parameters."""

    g_self: float = 0.8
    g_own_section: float = 1.0
    g_other_section: float = 0.7
    g_conductor: float = 1.0


@dataclass
class ClientInfo:
    client_id: int
    name: str
    section: Section

    @property
    def role(self) -> str:
        return self.section.role


def default_gain(listener: ClientInfo, source: ClientInfo,
                 params: DefaultGainParams) -> float:
    """Default linear gain of `source` in `listener`'s personal mix.

    Self-feedback first, then conductor priority, then intra-section boost.
    Pure function of its inputs.
    """
    if source.section.is_listener:
        raise GainError(f"client {source.client_id} has listener role and is not a mixable source")
    if source.client_id == listener.client_id:
        return params.g_self
    if source.section.is_conductor:
        return params.g_conductor
    if source.section == listener.section:
        return params.g_own_section
    return params.g_other_section


class GainMatrix:
    """Per-(listener, source) linear gains with section-aware defaults.

    Explicit per-pair overrides take precedence over the default rule.
    Gains are clamped to [0, 4] on write.
    """

    def __init__(self, params: DefaultGainParams | None = None):
        self.params = params or DefaultGainParams()
        self._clients: dict[int, ClientInfo] = {}
        self._overrides: dict[tuple[int, int], float] = {}

    def register(self, client: ClientInfo) -> None:
        self._clients[client.client_id] = client

    def unregister(self, client_id: int) -> None:
        self._clients.pop(client_id, None)
        self._overrides = {k: v for k, v in self._overrides.items()
                           if client_id not in k}

    def set(self, listener_id: int, source_id: int, gain: float) -> float:
        """Set an explicit override; returns the clamped value applied."""
        clamped = clamp_gain(gain)
        self._overrides[(listener_id, source_id)] = clamped
        return clamped

    def gain(self, listener_id: int, source_id: int) -> float:
        override = self._overrides.get((listener_id, source_id))
        if override is not None:
            return override
        try:
            listener = self._clients[listener_id]
            source = self._clients[source_id]
        except KeyError as exc:
            raise GainError(f"no gain defined for pair ({listener_id}, {source_id}): "
                            f"unknown client {exc.args[0]}") from None
        return default_gain(listener, source, self.params)

    def row(self, listener_id: int) -> dict[int, float]:
        """All source gains for one listener (sources exclude listener-role clients)."""
        return {sid: self.gain(listener_id, sid)
                for sid, c in self._clients.items() if not c.section.is_listener}


def mix_for_listener(listener_id: int, frames: dict[int, AudioFrame],
                     gains: GainMatrix, seq: int = 0,
                     timestamp_us: int = 0) -> AudioFrame:
    """Personalized mix of all source frames for one listener.

    Output sample n = clamp_i16(sum over sources of round(gain * frame_s[n])),
    accumulated before clamping.  Bit-exact and deterministic.
    """
    geometry = None
    acc = None
    for source_id, frame in frames.items():
        if geometry is None:
            geometry = (frame.frame_size, frame.channels)
            acc = np.zeros(frame.samples.shape, dtype=np.int64)
        elif (frame.frame_size, frame.channels) != geometry:
            raise GeometryError(f"source {source_id} frame geometry "
                                f"{(frame.frame_size, frame.channels)} != {geometry}")
        acc += scale_samples(frame.samples, gains.gain(listener_id, source_id))
    if geometry is None:
        raise GeometryError("mix_for_listener requires at least one source frame")
    clamped = np.clip(acc, I16_MIN, I16_MAX).astype(np.int16)
    return AudioFrame(seq, timestamp_us, clamped, geometry[0], geometry[1])


def apply_master_limit(frame: AudioFrame, ceiling: float) -> AudioFrame:
    """Scale every sample by `ceiling` with the shared rounding rule.

    Identity (same object) at ceiling 1.0.
    """
    if not 0.0 < ceiling <= 1.0:
        raise ValueError(f"ceiling must be in (0, 1], got {ceiling}")
    if ceiling == 1.0:
        return frame
    scaled = np.clip(scale_samples(frame.samples, ceiling), I16_MIN, I16_MAX)
    return AudioFrame(frame.seq, frame.timestamp_us, scaled.astype(np.int16),
                      frame.frame_size, frame.channels)
