"""Declarative experiment runner on the virtual clock.

Loads a TOML scenario (session config, clients with network profiles and
sources, conductor click, duration, seed), wires ServerEngine + ClientEngine
instances through the network emulator, runs to completion and emits a
LatencyReport plus all artifacts.  Deterministic given the seed.
"""
from __future__ import annotations

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import wire
from .audio import SAMPLE_RATE, VALID_FRAME_SIZES, tick_time_us
from .client import (AudioSend, ClickSource, ClientConfig, ClientEngine,
                     ControlSend, OnsetFollowerSource, SilenceSource,
                     SineSource, WavSource)
from .engine import (ControlOut, DatagramOut, GatewayClose, GatewayOut,
                     ServerEngine, SessionConfig)
from .errors import ScenarioError
from .latency import LatencyReport
from .netem import PRESETS, Emulator, NetworkProfile, preset
from .wavio import write_wav


@dataclass
class ClientSpec:
    name: str
    section: str
    role: str = "performer"
    source: str = "silence"
    source_params: dict = field(default_factory=dict)
    device_buffer_ms: float = 0.0
    client_jb_depth: int = 2
    profile: NetworkProfile = field(default_factory=lambda: preset("lan"))
    record_sink: bool = False


@dataclass
class Scenario:
    clients: list[ClientSpec]
    duration_ms: float = 10_000.0
    seed: int = 1
    frame_size: int = 128
    channels: int = 1
    server_jb_depth: int = 2
    probe_interval_ms: float = 200.0
    probe_start_ms: float = 500.0
    click: dict | None = None  # {"period_ms", "count", "start_ms", ...}
    gateway_record: bool = False
    gateway_buffer_ms: float = 2000.0
    name: str = "scenario"

    def validate(self) -> None:
        if self.frame_size not in VALID_FRAME_SIZES:
            raise ScenarioError(f"session.frame_size: {self.frame_size} not in "
                                f"{VALID_FRAME_SIZES}")
        if self.duration_ms <= 0:
            raise ScenarioError("session.duration_ms: must be positive")
        if not self.clients:
            raise ScenarioError("clients: at least one client required")
        names = [c.name for c in self.clients]
        if len(set(names)) != len(names):
            raise ScenarioError("clients.name: names must be unique")
        conductors = [c for c in self.clients if c.role == "conductor"]
        if len(conductors) > 1:
            raise ScenarioError("clients.role: at most one conductor per session")
        followers = [c for c in self.clients if c.source == "follower"]
        if followers and not conductors:
            raise ScenarioError("clients.source: onset followers require a conductor")
        if followers and self.click is None:
            raise ScenarioError("click: required when onset followers are present")
        if self.click is not None:
            span_ms = (self.click.get("start_ms", 1000.0)
                       + self.click["period_ms"] * self.click["count"])
            if self.duration_ms < span_ms:
                raise ScenarioError(
                    f"session.duration_ms: {self.duration_ms} shorter than the "
                    f"click span ({span_ms} ms)")


def _parse_profile(entry: dict, idx: int) -> NetworkProfile:
    prof = entry.get("profile", "lan")
    if isinstance(prof, str):
        try:
            return preset(prof)
        except ValueError as exc:
            raise ScenarioError(f"clients[{idx}].profile: {exc}") from None
    if isinstance(prof, dict):
        try:
            return NetworkProfile(**prof)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"clients[{idx}].profile: {exc}") from None
    raise ScenarioError(f"clients[{idx}].profile: preset name or table expected")


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    session = doc.get("session", {})
    clients = []
    for idx, entry in enumerate(doc.get("clients", [])):
        try:
            spec = ClientSpec(
                name=entry["name"],
                section=entry.get("section", "soprano"),
                role=entry.get("role", "performer"),
                source=entry.get("source", "silence"),
                source_params=entry.get("source_params", {}),
                device_buffer_ms=float(entry.get("device_buffer_ms", 0.0)),
                client_jb_depth=int(entry.get("client_jb_depth", 2)),
                profile=_parse_profile(entry, idx),
                record_sink=bool(entry.get("record_sink", False)),
            )
        except KeyError as exc:
            raise ScenarioError(f"clients[{idx}].{exc.args[0]}: required") from None
        clients.append(spec)
    scenario = Scenario(
        clients=clients,
        duration_ms=float(session.get("duration_ms", 10_000.0)),
        seed=int(session.get("seed", 1)),
        frame_size=int(session.get("frame_size", 128)),
        channels=int(session.get("channels", 1)),
        server_jb_depth=int(session.get("server_jb_depth", 2)),
        probe_interval_ms=float(session.get("probe_interval_ms", 200.0)),
        probe_start_ms=float(session.get("probe_start_ms", 500.0)),
        click=doc.get("click"),
        gateway_record=bool(doc.get("gateway", {}).get("record", False)),
        gateway_buffer_ms=float(doc.get("gateway", {}).get("buffer_ms", 2000.0)),
        name=name,
    )
    scenario.validate()
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return scenario_from_dict(doc, name=path.stem)


def _build_source(spec: ClientSpec, scenario: Scenario):
    params = spec.source_params
    if spec.source == "silence":
        return SilenceSource()
    if spec.source == "sine":
        return SineSource(params.get("freq_hz", 440.0), params.get("amplitude", 0.5))
    if spec.source == "wav":
        return WavSource(params["path"], loop=params.get("loop", False))
    if spec.source == "click":
        click = dict(scenario.click or {})
        click.update(params)
        return ClickSource(**click)
    if spec.source == "follower":
        return OnsetFollowerSource(
            reaction_ms=params.get("reaction_ms", 150.0),
            note_ms=params.get("note_ms", 200.0),
            freq_hz=params.get("freq_hz", 440.0),
            amplitude=params.get("amplitude", 0.5))
    raise ScenarioError(f"clients.source: unknown source {spec.source!r}")


class _ClientCtx:
    def __init__(self, engine: ClientEngine, spec: ClientSpec):
        self.engine = engine
        self.spec = spec
        self.tick_n = 0
        self.started = False


class ScenarioRunner:
    """Single-threaded virtual-time execution of one scenario."""

    JOIN_BASE_US = 20_000
    JOIN_STAGGER_US = 7_000  # deliberately not a multiple of any frame duration

    def __init__(self, scenario: Scenario, out_dir=None):
        self.scenario = scenario
        self.out_dir = Path(out_dir) if out_dir else None
        self.frame_us = scenario.frame_size * 1_000_000 // SAMPLE_RATE
        self.emu = Emulator(scenario.seed, self.frame_us)
        self.clock = self.emu.clock
        self.server = ServerEngine(SessionConfig(
            frame_size=scenario.frame_size,
            channels=scenario.channels,
            server_jb_depth=scenario.server_jb_depth,
            gateway_buffer_ms=scenario.gateway_buffer_ms,
        ))
        self.ctxs: list[_ClientCtx] = []
        self.gateway_records: list[bytes] = []

    # --------------------------------------------------------------- wiring

    def _dispatch_server_outs(self, outs) -> None:
        for out in outs:
            if isinstance(out, ControlOut):
                link = self._control_down.get(out.conn_id)
                if link is not None:
                    idx = out.conn_id
                    link.send(wire.encode_control(out.msg),
                              lambda data, i=idx: self._client_control(i, data))
            elif isinstance(out, DatagramOut):
                ctx = self._by_client_id.get(out.client_id)
                if ctx is not None:
                    link = self._audio_down[ctx.spec.name]
                    seq = self._down_seq[ctx.spec.name]
                    self._down_seq[ctx.spec.name] += 1
                    link.send(seq, out.payload,
                              lambda data, c=ctx: c.engine.on_datagram(
                                  data, self.clock.now_us))
            elif isinstance(out, GatewayOut):
                self.clock.schedule(out.due_us, self.gateway_records.append,
                                    out.record)
            elif isinstance(out, GatewayClose):
                self.server.drop_subscriber(out.subscriber_id)

    def _client_control(self, idx: int, data: bytes) -> None:
        ctx = self.ctxs[idx]
        msg = wire.decode_control(data)
        outs = ctx.engine.handle_control(msg, self.clock.now_us)
        for out in outs:
            if isinstance(out, ControlSend):
                self._send_control_up(idx, out.msg)
        if ctx.engine.epoch_us is not None and not ctx.started:
            ctx.started = True
            self._by_client_id[ctx.engine.client_id] = ctx
            self.clock.schedule(self.clock.now_us, self._client_tick, ctx)

    def _send_control_up(self, idx: int, msg: dict) -> None:
        self._control_up[idx].send(
            wire.encode_control(msg),
            lambda data, i=idx: self._dispatch_server_outs(
                self.server.handle_control(i, wire.decode_control(data))))

    def _client_tick(self, ctx: _ClientCtx) -> None:
        outs = ctx.engine.tick(self.clock.now_us)
        name = ctx.spec.name
        for out in outs:
            if isinstance(out, AudioSend):
                seq = self._up_seq[name]
                self._up_seq[name] += 1
                self.clock.schedule(
                    out.due_us, self._audio_up[name].send, seq, out.payload,
                    lambda data: self.server.on_datagram(data, self.clock.now_us))
        ctx.tick_n += 1
        self.clock.schedule(
            tick_time_us(ctx.engine.epoch_us, ctx.tick_n, self.scenario.frame_size),
            self._client_tick, ctx)

    def _server_tick(self, n: int) -> None:
        self._dispatch_server_outs(self.server.tick(self.clock.now_us))
        self.clock.schedule(tick_time_us(0, n + 1, self.scenario.frame_size),
                            self._server_tick, n + 1)

    # ------------------------------------------------------------------ run

    def run(self) -> LatencyReport:
        sc = self.scenario
        self._audio_up = {}
        self._audio_down = {}
        self._control_up = {}
        self._control_down = {}
        self._up_seq = {}
        self._down_seq = {}
        self._by_client_id = {}

        for idx, spec in enumerate(sc.clients):
            sink_path = capture_path = None
            if self.out_dir is not None:
                if spec.record_sink:
                    sink_path = str(self.out_dir / "wav" / f"{spec.name}_sink.wav")
                if spec.source == "follower":
                    capture_path = str(self.out_dir / "wav" / f"{spec.name}_capture.wav")
            config = ClientConfig(
                name=spec.name, section=spec.section, role=spec.role,
                source=_build_source(spec, sc),
                sink_path=sink_path, capture_path=capture_path,
                device_buffer_ms=spec.device_buffer_ms,
                client_jb_depth=spec.client_jb_depth,
                probe_interval_ms=(0.0 if spec.role == "listener"
                                   else sc.probe_interval_ms),
                probe_start_ms=sc.probe_start_ms,
                mute_all_but_conductor=spec.source == "follower",
                seed=sc.seed * 1000 + idx,
            )
            ctx = _ClientCtx(ClientEngine(config), spec)
            self.ctxs.append(ctx)
            self._up_seq[spec.name] = 0
            self._down_seq[spec.name] = 0
            self._audio_up[spec.name] = self.emu.link(f"{spec.name}>server", spec.profile)
            self._audio_down[spec.name] = self.emu.link(f"server>{spec.name}", spec.profile)
            self._control_up[idx] = self.emu.reliable(f"{spec.name}>server.ctl",
                                                      spec.profile.one_way_delay_ms)
            self._control_down[idx] = self.emu.reliable(f"server>{spec.name}.ctl",
                                                        spec.profile.one_way_delay_ms)
            join_at = self.JOIN_BASE_US + idx * self.JOIN_STAGGER_US
            self.clock.schedule(join_at, self._send_control_up, idx,
                                ctx.engine.join_msg())

        if sc.gateway_record:
            self.server.handle_gateway(-1, {"type": "gateway_hello"})

        self.clock.schedule(0, self._server_tick, 0)
        self.clock.advance(int(sc.duration_ms * 1000))

        for ctx in self.ctxs:
            ctx.engine.flush()
        return self._report()

    # -------------------------------------------------------------- results

    def _report(self) -> LatencyReport:
        sc = self.scenario
        rtt_samples = []
        for ctx in self.ctxs:
            rtt_samples.extend(ctx.engine.rtt_samples_ms)
        tracks = {ctx.spec.name: ctx.engine.session_record()["onset_times_ms"]
                  for ctx in self.ctxs
                  if isinstance(ctx.engine.config.source, OnsetFollowerSource)}
        if len(tracks) < 2:
            tracks = None  # spread undefined with fewer than two followers
        config = {
            "scenario": sc.name,
            "seed": sc.seed,
            "frame_size": sc.frame_size,
            "server_jb_depth": sc.server_jb_depth,
            "clients": [{"name": c.name, "section": c.section, "role": c.role,
                         "source": c.source,
                         "device_buffer_ms": c.device_buffer_ms,
                         "client_jb_depth": c.client_jb_depth,
                         "net_one_way_ms": c.profile.one_way_delay_ms}
                        for c in sc.clients],
        }
        report = LatencyReport.build(rtt_samples, tracks=tracks, config=config)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "report.json").write_text(report.to_json() + "\n")
            (self.out_dir / "delivery_log.txt").write_text(
                "\n".join(self.emu.log) + "\n")
            records = [ctx.engine.session_record() for ctx in self.ctxs]
            (self.out_dir / "records.json").write_text(
                json.dumps(records, indent=2, sort_keys=True) + "\n")
            if self.scenario.gateway_record and self.gateway_records:
                samples = []
                for record in self.gateway_records:
                    frame, _cid, _flags = wire.decode_datagram(
                        record[wire.LENGTH_PREFIX.size:])
                    samples.append(frame.samples)
                write_wav(self.out_dir / "wav" / "gateway.wav",
                          np.concatenate(samples), self.scenario.channels)
        return report


def run_scenario(scenario: Scenario, out_dir=None) -> LatencyReport:
    return ScenarioRunner(scenario, out_dir).run()
