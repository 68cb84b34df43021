"""Headless performer/conductor/listener endpoint.

Sources audio from WAV files or synthetic generators, models sound-card
buffering as a pure delay, streams frames at tick cadence, buffers received
mixes in a client-side jitter buffer and renders them to a sink.  The
onset-follower source reproduces a singer following the conductor's click:
it reacts a fixed time after each click heard in its own mix, so its note
timing inherits the one-way path latency.

Probe RTT accounting: probes traverse the real (emulated) network and both
tick alignments; the deterministic terms the probe path skips -- device
buffering both ways, packetization and the two jitter-buffer depths -- are
added analytically to every sample.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .audio import (SAMPLE_RATE, AudioFrame, frame_duration_ms, tick_time_us)
from .errors import NmpError
from .jitter import JitterBuffer, PopKind
from .latency import OnsetDetector
from .wavio import read_wav, write_wav


def _sine_samples(freq_hz: float, amplitude: float, start_index: int,
                  count: int) -> np.ndarray:
    n = np.arange(start_index, start_index + count, dtype=np.float64)
    wave_f = amplitude * 32767.0 * np.sin(2.0 * math.pi * freq_hz * n / SAMPLE_RATE)
    return (np.sign(wave_f) * np.floor(np.abs(wave_f) + 0.5)).astype(np.int16)


class SilenceSource:
    def frame(self, index: int, start_us: int, frame_size: int) -> np.ndarray:
        return np.zeros(frame_size, dtype=np.int16)


class SineSource:
    def __init__(self, freq_hz: float, amplitude: float = 0.5):
        self.freq_hz = freq_hz
        self.amplitude = amplitude

    def frame(self, index: int, start_us: int, frame_size: int) -> np.ndarray:
        return _sine_samples(self.freq_hz, self.amplitude,
                             index * frame_size, frame_size)


class WavSource:
    def __init__(self, path, loop: bool = False):
        samples, channels = read_wav(path)
        if channels == 2:
            samples = samples.reshape(-1, 2).mean(axis=1).astype(np.int16)
        self.samples = samples
        self.loop = loop

    def frame(self, index: int, start_us: int, frame_size: int) -> np.ndarray:
        start = index * frame_size
        if self.loop and len(self.samples):
            idx = (start + np.arange(frame_size)) % len(self.samples)
            return self.samples[idx]
        chunk = self.samples[start:start + frame_size]
        if len(chunk) < frame_size:
            chunk = np.concatenate([chunk, np.zeros(frame_size - len(chunk),
                                                    dtype=np.int16)])
        return chunk


class ClickSource:
    """Conductor metronome: sine bursts at fixed period."""

    def __init__(self, period_ms: float, count: int, start_ms: float = 1000.0,
                 freq_hz: float = 880.0, amplitude: float = 0.5,
                 burst_ms: float = 60.0):
        self.period_us = int(period_ms * 1000)
        self.count = count
        self.start_us = int(start_ms * 1000)
        self.freq_hz = freq_hz
        self.amplitude = amplitude
        self.burst_us = int(burst_ms * 1000)

    def frame(self, index: int, start_us: int, frame_size: int) -> np.ndarray:
        out = np.zeros(frame_size, dtype=np.int16)
        frame_us = frame_size * 1_000_000 // SAMPLE_RATE + 1
        for k in range(self.count):
            burst_start = self.start_us + k * self.period_us
            if burst_start >= start_us + frame_us or burst_start + self.burst_us <= start_us:
                continue
            times = start_us + np.arange(frame_size) * 1_000_000.0 / SAMPLE_RATE
            mask = (times >= burst_start) & (times < burst_start + self.burst_us)
            tone = _sine_samples(self.freq_hz, self.amplitude,
                                 index * frame_size, frame_size)
            out[mask] = tone[mask]
        return out


class OnsetFollowerSource:
    """Sings a note reaction_ms after each click perceived in the mix."""

    def __init__(self, reaction_ms: float = 150.0, note_ms: float = 200.0,
                 freq_hz: float = 440.0, amplitude: float = 0.5,
                 min_click_gap_ms: float = 300.0):
        self.reaction_us = int(reaction_ms * 1000)
        self.note_us = int(note_ms * 1000)
        self.freq_hz = freq_hz
        self.amplitude = amplitude
        # A singer mid-note does not re-attack: re-triggers within the gap
        # (e.g. a click burst split by concealment) are ignored.
        self.min_click_gap_us = int(min_click_gap_ms * 1000)
        self._last_click_us: int | None = None
        self._notes: list[dict] = []  # {"start_us": int, "recorded": bool}
        self.emitted_onsets_us: list[int] = []

    def on_click(self, perceived_us: int) -> None:
        if (self._last_click_us is not None
                and perceived_us - self._last_click_us < self.min_click_gap_us):
            return
        self._last_click_us = perceived_us
        self._notes.append({"start_us": perceived_us + self.reaction_us,
                            "recorded": False})

    def frame(self, index: int, start_us: int, frame_size: int) -> np.ndarray:
        out = np.zeros(frame_size, dtype=np.int16)
        frame_us = frame_size * 1_000_000 // SAMPLE_RATE + 1
        times = None
        for note in self._notes:
            note_start = note["start_us"]
            if note_start >= start_us + frame_us or note_start + self.note_us <= start_us:
                continue
            if times is None:
                times = start_us + np.arange(frame_size) * 1_000_000.0 / SAMPLE_RATE
            mask = (times >= note_start) & (times < note_start + self.note_us)
            tone = _sine_samples(self.freq_hz, self.amplitude,
                                 index * frame_size, frame_size)
            out[mask] = tone[mask]
            if not note["recorded"]:
                self.emitted_onsets_us.append(note_start)
                note["recorded"] = True
        self._notes = [n for n in self._notes
                       if n["start_us"] + self.note_us > start_us]
        return out


@dataclass
class ClientConfig:
    name: str
    section: str = "soprano"
    role: str = "performer"
    source: object = field(default_factory=SilenceSource)
    sink_path: str | None = None
    capture_path: str | None = None
    device_buffer_ms: float = 0.0
    client_jb_depth: int = 2
    probe_interval_ms: float = 0.0
    probe_start_ms: float = 500.0
    mute_all_but_conductor: bool = False
    seed: int = 0


@dataclass
class ControlSend:
    msg: dict


@dataclass
class AudioSend:
    payload: bytes
    due_us: int


class ClientEngine:
    """Transport-free client state machine driven by an adapter."""

    def __init__(self, config: ClientConfig):
        self.config = config
        self.client_id: int | None = None
        self.session: dict | None = None
        self.epoch_us: int | None = None
        self.tick_count = 0
        self.buffer: JitterBuffer | None = None
        self.detector = OnsetDetector()
        self._rng = random.Random(config.seed)
        self._probe_seq = 0
        self._next_probe_us: int | None = None
        self._outstanding_probes: dict[int, int] = {}
        self._pending_echoes: list[tuple[int, int]] = []  # (seq, unused)
        self.rtt_samples_ms: list[float] = []
        self.click_times_us: list[int] = []
        self.sink_samples: list[np.ndarray] = []
        self.capture_samples: list[np.ndarray] = []
        self.sink_first_render_us: int | None = None
        self.capture_first_us: int | None = None
        self.last_mix_us: int | None = None
        self.starved = False
        self._muted: set[int] = set()
        self.counters = {"frames_sent": 0, "probes_sent": 0, "mixes_received": 0,
                         "probe_samples": 0, "decode_errors": 0}

    # ----------------------------------------------------------- control path

    def join_msg(self) -> dict:
        msg = {"type": "join", "name": self.config.name,
               "section": self.config.section, "role": self.config.role}
        if self.client_id is not None:  # idempotent rejoin
            msg["client_id"] = self.client_id
        return msg

    def handle_control(self, msg: dict, now_us: int) -> list:
        msg_type = msg.get("type")
        if msg_type == "welcome":
            self.client_id = msg["client_id"]
            self.session = msg["session"]
            if self.epoch_us is None:
                self.epoch_us = now_us
                depth = self.config.client_jb_depth
                self.buffer = JitterBuffer(depth, self.session["frame_size"],
                                           self.session["channels"])
                if self.config.probe_interval_ms > 0:
                    self._next_probe_us = now_us + int(self.config.probe_start_ms * 1000)
            return []
        if msg_type == "roster" and self.config.mute_all_but_conductor:
            if self.client_id is None:
                return []
            outs = []
            for entry in msg["clients"]:
                if entry["role"] in ("conductor", "listener"):
                    continue
                if entry["client_id"] in self._muted:
                    continue
                self._muted.add(entry["client_id"])
                outs.append(ControlSend({"type": "set_gain",
                                         "listener_id": self.client_id,
                                         "source_id": entry["client_id"],
                                         "gain": 0.0}))
            return outs
        if msg_type == "ping":
            return [ControlSend({"type": "pong", "t0_us": msg["t0_us"],
                                 "t1_us": now_us})]
        if msg_type == "error" and msg.get("code") in ("conductor_exists", "bad_name",
                                                       "bad_section"):
            raise NmpError(f"join rejected: {msg['code']}: {msg['message']}")
        return []

    # ------------------------------------------------------------ audio path

    def on_datagram(self, data: bytes, now_us: int) -> None:
        try:
            frame, client_id, flags = wire.decode_datagram(data)
        except Exception:
            self.counters["decode_errors"] += 1
            return
        if flags & wire.FLAG_PROBE:
            self._pending_echoes.append((frame.seq, now_us))
            return
        self.counters["mixes_received"] += 1
        self.last_mix_us = now_us
        if self.buffer is not None:
            self.buffer.push(frame)

    # ------------------------------------------------------------------ tick

    def tick(self, now_us: int) -> list[AudioSend]:
        if self.session is None:
            return []
        frame_size = self.session["frame_size"]
        device_us = int(self.config.device_buffer_ms * 1000)
        outs: list[AudioSend] = []

        # Capture and send one source frame (delayed by the device buffer).
        samples = self.config.source.frame(self.tick_count, now_us, frame_size)
        if not self.config.role == "listener":
            frame = AudioFrame(self.tick_count, now_us, samples, frame_size,
                               self.session["channels"])
            outs.append(AudioSend(wire.encode_datagram(frame, self.client_id),
                                  now_us + device_us))
            self.counters["frames_sent"] += 1
        if self.config.capture_path is not None:
            if self.capture_first_us is None:
                self.capture_first_us = now_us
            self.capture_samples.append(samples)

        # Probes depart off the tick grid so alignment is sampled per probe.
        if self._next_probe_us is not None and now_us >= self._next_probe_us:
            frame_us = frame_size * 1_000_000 / SAMPLE_RATE
            t_send = now_us + int(self._rng.uniform(0.0, frame_us))
            probe = AudioFrame.silence(self._probe_seq, t_send, frame_size,
                                       self.session["channels"])
            outs.append(AudioSend(
                wire.encode_datagram(probe, self.client_id, wire.FLAG_PROBE), t_send))
            self._outstanding_probes[self._probe_seq] = t_send
            self._probe_seq += 1
            self.counters["probes_sent"] += 1
            self._next_probe_us += int(self.config.probe_interval_ms * 1000)

        # Echoed probes are examined once per tick (audio-callback cadence).
        for seq, _arrival in self._pending_echoes:
            t_send = self._outstanding_probes.pop(seq, None)
            if t_send is None:
                continue
            rtt_ms = (now_us - t_send) / 1000.0
            self.rtt_samples_ms.append(rtt_ms + self._analytic_terms_ms())
            self.counters["probe_samples"] += 1
        self._pending_echoes.clear()

        # Render one mix frame.
        if self.buffer is not None:
            result = self.buffer.pop()
            if result.kind is not PopKind.NOT_READY:
                rendered = result.frame
                if self.sink_first_render_us is None:
                    self.sink_first_render_us = now_us + device_us
                if self.config.sink_path is not None:
                    self.sink_samples.append(rendered.samples)
                if self.detector.feed(rendered.samples):
                    perceived = now_us + device_us
                    self.click_times_us.append(perceived)
                    if isinstance(self.config.source, OnsetFollowerSource):
                        self.config.source.on_click(perceived)
        self._check_starvation(now_us)
        self.tick_count += 1
        return outs

    def _analytic_terms_ms(self) -> float:
        frame_ms = frame_duration_ms(self.session["frame_size"])
        server_depth = self.session.get("server_jb_depth", 0)
        return (2.0 * self.config.device_buffer_ms
                + frame_ms  # packetization
                + (server_depth + self.config.client_jb_depth) * frame_ms)

    def _check_starvation(self, now_us: int) -> None:
        if not isinstance(self.config.source, OnsetFollowerSource) or self.starved:
            return
        if len(self.click_times_us) >= 2:
            period = self.click_times_us[1] - self.click_times_us[0]
            if now_us - self.click_times_us[-1] > 4 * period:
                self.starved = True

    # --------------------------------------------------------------- results

    def flush(self) -> None:
        channels = self.session["channels"] if self.session else 1
        if self.config.sink_path is not None and self.sink_samples:
            write_wav(self.config.sink_path, np.concatenate(self.sink_samples), channels)
        if self.config.capture_path is not None and self.capture_samples:
            write_wav(self.config.capture_path, np.concatenate(self.capture_samples),
                      channels)

    def session_record(self) -> dict:
        source = self.config.source
        onsets = (sorted(round(t / 1000.0, 3) for t in source.emitted_onsets_us)
                  if isinstance(source, OnsetFollowerSource) else [])
        return {
            "client_id": self.client_id,
            "name": self.config.name,
            "section": self.config.section,
            "role": self.config.role,
            "device_buffer_ms": self.config.device_buffer_ms,
            "client_jb_depth": self.config.client_jb_depth,
            "counters": dict(self.counters),
            "jitter_buffer": self.buffer.stats.as_dict() if self.buffer else None,
            "rtt_samples_ms": [round(s, 3) for s in self.rtt_samples_ms],
            "onset_times_ms": onsets,
            "click_times_ms": [round(t / 1000.0, 3) for t in self.click_times_us],
            "starved": self.starved,
            "sink_first_render_ms": (None if self.sink_first_render_us is None
                                     else round(self.sink_first_render_us / 1000.0, 3)),
        }


def parse_source_spec(spec: str):
    """CLI source specs: wav:path[:loop], sine:freq[:amp], silence, follower."""
    if spec == "silence":
        return SilenceSource()
    kind, _, rest = spec.partition(":")
    if kind == "wav":
        path, _, flag = rest.partition(":")
        return WavSource(path, loop=flag == "loop")
    if kind == "sine":
        freq, _, amp = rest.partition(":")
        return SineSource(float(freq), float(amp) if amp else 0.5)
    if kind == "follower":
        reaction, _, _ = rest.partition(":")
        return OnsetFollowerSource(float(reaction) if reaction else 150.0)
    raise ValueError(f"unknown source spec {spec!r}")
