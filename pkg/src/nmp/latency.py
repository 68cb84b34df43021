"""Latency model, RTT statistics, onset extraction and sync spread.

predict_rtt is the analytic loop model; measure_rtt summarizes probe samples
against the 100 ms rehearsal budget; detect_onsets / sync_spread turn
recorded tracks into inter-performer synchronization statistics.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .audio import frame_duration_ms
from .errors import MeasurementError
from .wavio import read_wav

RTT_BUDGET_MS = 100.0
MIN_RTT_SAMPLES = 30

ONSET_RMS_THRESHOLD = 0.10  # fraction of int16 full scale
ONSET_HYSTERESIS_FRAMES = 3

_VALID_FRAME_MS = tuple(frame_duration_ms(n) for n in (64, 128, 256))


@dataclass
class LatencyBudget:
    """Every controllable or modeled latency term of one audio loop."""

    device_buffer_ms: float
    net_one_way_ms: float
    frame_ms: float
    server_jb_depth: int
    client_jb_depth: int

    def __post_init__(self):
        for name in ("device_buffer_ms", "net_one_way_ms", "frame_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.server_jb_depth < 0 or self.client_jb_depth < 0:
            raise ValueError("jitter buffer depths must be non-negative")
        if not any(math.isclose(self.frame_ms, v, abs_tol=0.01) for v in _VALID_FRAME_MS):
            raise ValueError(f"frame_ms {self.frame_ms} not one of {_VALID_FRAME_MS}")


def predict_rtt(budget: LatencyBudget) -> float:
    """Analytic round-trip time in ms.

    Device buffers both ways, network both ways, one frame of packetization,
    half a frame of expected server tick alignment, and one frame per jitter
    buffer slot on each side.
    """
    return (2.0 * budget.device_buffer_ms
            + 2.0 * budget.net_one_way_ms
            + budget.frame_ms  # packetization
            + budget.server_jb_depth * budget.frame_ms
            + budget.frame_ms / 2.0  # expected tick alignment
            + budget.client_jb_depth * budget.frame_ms)


@dataclass
class RttStats:
    mean_ms: float
    std_ms: float
    p95_ms: float
    count: int
    passed: bool


def measure_rtt(samples_ms, budget_ms: float = RTT_BUDGET_MS) -> RttStats:
    samples = np.asarray(list(samples_ms), dtype=np.float64)
    if samples.size < MIN_RTT_SAMPLES:
        raise MeasurementError(
            f"need at least {MIN_RTT_SAMPLES} probe samples, got {samples.size}")
    p95 = float(np.percentile(samples, 95))
    return RttStats(mean_ms=float(samples.mean()), std_ms=float(samples.std()),
                    p95_ms=p95, count=int(samples.size), passed=p95 <= budget_ms)


class OnsetDetector:
    """Frame-RMS rising-edge detector with release hysteresis.

    Fires when frame RMS crosses the full-scale threshold; re-arms only after
    the RMS has stayed below the threshold for `hysteresis` consecutive frames.
    """

    def __init__(self, threshold: float = ONSET_RMS_THRESHOLD,
                 hysteresis: int = ONSET_HYSTERESIS_FRAMES):
        self.threshold = threshold
        self.hysteresis = hysteresis
        self._armed = True
        self._quiet_frames = 0

    def feed(self, samples: np.ndarray) -> bool:
        """Feed one frame; returns True when this frame starts an onset."""
        rms = math.sqrt(float(np.mean(samples.astype(np.float64) ** 2))) / 32768.0
        if rms > self.threshold:
            self._quiet_frames = 0
            if self._armed:
                self._armed = False
                return True
            return False
        if not self._armed:
            self._quiet_frames += 1
            if self._quiet_frames >= self.hysteresis:
                self._armed = True
                self._quiet_frames = 0
        return False


def detect_onsets(wav_path, frame_size: int = 128, start_ms: float = 0.0) -> list[float]:
    """Onset times (ms) from a recorded track; resolution = frame duration."""
    samples, channels = read_wav(wav_path)
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1).astype(np.int16)
    detector = OnsetDetector()
    onsets = []
    frame_ms = frame_duration_ms(frame_size)
    for i in range(len(samples) // frame_size):
        frame = samples[i * frame_size:(i + 1) * frame_size]
        if detector.feed(frame):
            onsets.append(start_ms + i * frame_ms)
    return onsets


@dataclass
class SpreadStats:
    mean_ms: float
    std_ms: float
    per_pair_ms: dict[tuple[str, str], float]
    beats: int


def sync_spread(tracks: dict[str, list[float]]) -> SpreadStats:
    """Inter-performer onset spread: mean absolute pairwise offset per beat.

    Tracks must carry the same number of onsets (beats aligned by index);
    mismatched counts name the offenders so starved followers surface here.
    Translation-invariant by construction.
    """
    if len(tracks) < 2:
        raise MeasurementError("sync_spread needs at least 2 tracks")
    counts = {name: len(onsets) for name, onsets in tracks.items()}
    if len(set(counts.values())) != 1:
        raise MeasurementError(f"mismatched onset counts per track: {counts}")
    beats = next(iter(counts.values()))
    if beats == 0:
        raise MeasurementError("tracks contain no onsets")
    offsets = []
    per_pair: dict[tuple[str, str], list[float]] = {}
    for a, b in itertools.combinations(sorted(tracks), 2):
        pair_offsets = [abs(tracks[a][i] - tracks[b][i]) for i in range(beats)]
        per_pair[(a, b)] = pair_offsets
        offsets.extend(pair_offsets)
    arr = np.asarray(offsets, dtype=np.float64)
    return SpreadStats(mean_ms=float(arr.mean()), std_ms=float(arr.std()),
                       per_pair_ms={pair: float(np.mean(v)) for pair, v in per_pair.items()},
                       beats=beats)


@dataclass
class LatencyReport:
    """Measured RTTs and onset spreads for one emulated or live session."""

    rtt_samples_ms: list[float]
    rtt_mean_ms: float
    rtt_std_ms: float
    rtt_p95_ms: float
    passed: bool
    onset_spread_mean_ms: float | None = None
    onset_spread_std_ms: float | None = None
    pairwise_offsets_ms: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @classmethod
    def build(cls, rtt_samples_ms, tracks: dict[str, list[float]] | None = None,
              config: dict | None = None, budget_ms: float = RTT_BUDGET_MS):
        stats = measure_rtt(rtt_samples_ms, budget_ms)
        spread_mean = spread_std = None
        pairwise: dict[str, float] = {}
        if tracks:
            spread = sync_spread(tracks)
            spread_mean, spread_std = spread.mean_ms, spread.std_ms
            pairwise = {f"{a}|{b}": v for (a, b), v in spread.per_pair_ms.items()}
        return cls(rtt_samples_ms=[round(s, 3) for s in rtt_samples_ms],
                   rtt_mean_ms=round(stats.mean_ms, 3),
                   rtt_std_ms=round(stats.std_ms, 3),
                   rtt_p95_ms=round(stats.p95_ms, 3),
                   passed=stats.passed,
                   onset_spread_mean_ms=None if spread_mean is None else round(spread_mean, 3),
                   onset_spread_std_ms=None if spread_std is None else round(spread_std, 3),
                   pairwise_offsets_ms={k: round(v, 3) for k, v in pairwise.items()},
                   config=config or {})

    def to_json(self) -> str:
        doc = {
            "rtt_mean_ms": self.rtt_mean_ms,
            "rtt_std_ms": self.rtt_std_ms,
            "rtt_p95_ms": self.rtt_p95_ms,
            "pass": self.passed,
            "onset_spread_mean_ms": self.onset_spread_mean_ms,
            "onset_spread_std_ms": self.onset_spread_std_ms,
            "pairwise_offsets_ms": self.pairwise_offsets_ms,
            "rtt_samples_ms": self.rtt_samples_ms,
            "config": self.config,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LatencyReport":
        doc = json.loads(text)
        return cls(rtt_samples_ms=doc["rtt_samples_ms"],
                   rtt_mean_ms=doc["rtt_mean_ms"], rtt_std_ms=doc["rtt_std_ms"],
                   rtt_p95_ms=doc["rtt_p95_ms"], passed=doc["pass"],
                   onset_spread_mean_ms=doc.get("onset_spread_mean_ms"),
                   onset_spread_std_ms=doc.get("onset_spread_std_ms"),
                   pairwise_offsets_ms=doc.get("pairwise_offsets_ms", {}),
                   config=doc.get("config", {}))
