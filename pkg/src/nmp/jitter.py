"""Per-source reordering buffer with packet loss concealment.

Converts a jittery datagram stream into an isochronous frame stream.  The
steady-state latency it adds is exactly target_depth frame durations: the
first pop is allowed only once the buffer has primed with target_depth
frames (at least one).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .audio import I16_MAX, I16_MIN, AudioFrame, scale_samples
from .errors import GeometryError


class PushResult(enum.Enum):
    ACCEPTED = "accepted"
    LATE = "late"
    DUPLICATE = "duplicate"
    OVERFLOW = "overflow"


class PopKind(enum.Enum):
    FRAME = "frame"
    CONCEALED = "concealed"
    NOT_READY = "not_ready"


@dataclass
class PopResult:
    kind: PopKind
    frame: AudioFrame | None = None


@dataclass
class JitterStats:
    received: int = 0
    late: int = 0
    lost: int = 0
    duplicate: int = 0
    overflow: int = 0
    concealed: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class JitterBuffer:
    """Sequence-ordered buffer; single-writer push, single-reader pop."""

    def __init__(self, target_depth: int, frame_size: int, channels: int = 1,
                 capacity: int | None = None):
        if target_depth < 0:
            raise ValueError("target_depth must be >= 0")
        self.target_depth = target_depth
        self.frame_size = frame_size
        self.channels = channels
        self.capacity = capacity or max(2 * target_depth, 8)
        if self.capacity < max(2 * target_depth, 1):
            raise ValueError("capacity must be at least 2 * target_depth")
        self.stats = JitterStats()
        self._slots: dict[int, AudioFrame] = {}
        self._primed = False
        self._next_pop_seq = 0
        self._last_emitted: AudioFrame | None = None
        self._consecutive_misses = 0

    @property
    def next_pop_seq(self) -> int:
        return self._next_pop_seq

    @property
    def primed(self) -> bool:
        return self._primed

    def push(self, frame: AudioFrame) -> PushResult:
        if frame.frame_size != self.frame_size or frame.channels != self.channels:
            raise GeometryError(
                f"frame geometry {(frame.frame_size, frame.channels)} does not match "
                f"buffer {(self.frame_size, self.channels)}")
        if self._primed and frame.seq < self._next_pop_seq:
            self.stats.late += 1
            return PushResult.LATE
        if frame.seq in self._slots:
            self.stats.duplicate += 1
            return PushResult.DUPLICATE
        base = self._next_pop_seq if self._primed else min(self._slots, default=frame.seq)
        if frame.seq >= base + self.capacity:
            self.stats.overflow += 1
            return PushResult.OVERFLOW
        self._slots[frame.seq] = frame
        self.stats.received += 1
        if not self._primed and len(self._slots) >= max(self.target_depth, 1):
            self._primed = True
            self._next_pop_seq = min(self._slots)
        return PushResult.ACCEPTED

    def pop(self) -> PopResult:
        if not self._primed:
            return PopResult(PopKind.NOT_READY)
        seq = self._next_pop_seq
        self._next_pop_seq += 1
        frame = self._slots.pop(seq, None)
        if frame is not None:
            self._consecutive_misses = 0
            self._last_emitted = frame
            return PopResult(PopKind.FRAME, frame)
        self.stats.lost += 1
        self.stats.concealed += 1
        concealed = self._conceal(seq)
        self._consecutive_misses += 1
        self._last_emitted = concealed
        return PopResult(PopKind.CONCEALED, concealed)

    def _conceal(self, seq: int) -> AudioFrame:
        # First miss after a good frame: previous samples at half amplitude;
        # any further consecutive miss: silence.
        prev = self._last_emitted
        if self._consecutive_misses == 0 and prev is not None:
            samples = np.clip(scale_samples(prev.samples, 0.5),
                              I16_MIN, I16_MAX).astype(np.int16)
            return AudioFrame(seq, prev.timestamp_us, samples,
                              self.frame_size, self.channels)
        return AudioFrame.silence(seq, prev.timestamp_us if prev else 0,
                                  self.frame_size, self.channels)

    def depth(self) -> int:
        return len(self._slots)
