"""Transport-free session engine: admission, gain matrix, mix loop, gateway.

The engine never touches a socket.  Adapters (the virtual-time scenario
runner or the live asyncio server) feed it control messages and datagrams
and dispatch the actions it returns.  Shared state mutates only at tick
boundaries or inside serialized control handling, so a virtual-time run is
fully single-threaded and deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import wire
from .audio import (AudioFrame, ClientInfo, GainMatrix, DefaultGainParams,
                    Section, apply_master_limit, mix_for_listener,
                    tick_time_us)
from .errors import GeometryError, NmpError, ProtocolError
from .jitter import JitterBuffer, PopKind

GATEWAY_SOURCE_ID = 0


@dataclass
class SessionConfig:
    frame_size: int = 128
    channels: int = 1
    sample_rate: int = 48_000
    server_jb_depth: int = 2
    gateway_buffer_ms: float = 2000.0
    gateway_backlog_limit_ms: float = 10_000.0
    master_ceiling: float = 1.0
    gain_params: DefaultGainParams = field(default_factory=DefaultGainParams)


# Actions returned by engine methods; adapters dispatch them.
@dataclass
class ControlOut:
    conn_id: int
    msg: dict


@dataclass
class DatagramOut:
    client_id: int
    payload: bytes


@dataclass
class GatewayOut:
    subscriber_id: int
    record: bytes  # length-prefixed datagram record
    due_us: int    # delivery time after the deep gateway buffer


@dataclass
class GatewayClose:
    subscriber_id: int
    msg: dict


@dataclass
class _Member:
    info: ClientInfo
    conn_id: int
    buffer: JitterBuffer | None  # None for listener-role clients
    rtt_ms: float | None = None


class ServerEngine:
    def __init__(self, config: SessionConfig | None = None, epoch_us: int = 0):
        self.config = config or SessionConfig()
        self.epoch_us = epoch_us
        self.gains = GainMatrix(self.config.gain_params)
        self.members: dict[int, _Member] = {}
        self._conn_to_client: dict[int, int] = {}
        self._console_conns: set[int] = set()
        self._next_client_id = 1
        self.tick_index = 0
        self._pending_gains: list[tuple[int, int, float]] = []
        self._pending_roster: list = []  # joins/leaves applied at next tick
        self._probe_echoes: list[DatagramOut] = []
        self.subscribers: set[int] = set()
        self.counters = {
            "datagrams_in": 0,
            "decode_errors": 0,
            "unknown_client_drops": 0,
            "listener_audio_drops": 0,
            "probe_echoes": 0,
            "subscriber_tx_rejected": 0,
            "subscriber_audio_bytes_mixed": 0,  # must stay 0: one-way gateway
            "ticks": 0,
        }

    # ---------------------------------------------------------------- control

    def register_console(self, conn_id: int) -> None:
        self._console_conns.add(conn_id)

    def drop_conn(self, conn_id: int) -> list:
        if conn_id in self._console_conns:
            self._console_conns.discard(conn_id)
            self._conn_to_client.pop(conn_id, None)
            return []
        client_id = self._conn_to_client.get(conn_id)
        member = self.members.get(client_id)
        if member is None or member.conn_id != conn_id:
            self._conn_to_client.pop(conn_id, None)
            return []
        return self.handle_control(conn_id, {"type": "leave"})

    def handle_control(self, conn_id: int, msg: dict) -> list:
        msg_type = msg.get("type")
        if msg_type == "join":
            return self._handle_join(conn_id, msg)
        if msg_type == "console_hello":
            self.register_console(conn_id)
            # A console may act for one client (its own fader row).
            if isinstance(msg.get("client_id"), int):
                self._conn_to_client[conn_id] = msg["client_id"]
            outs = [ControlOut(conn_id, self._roster_msg()),
                    ControlOut(conn_id, self.stats_msg())]
            outs.extend(ControlOut(conn_id, m) for m in self._gain_snapshot_msgs())
            return outs

        sender_id = self._conn_to_client.get(conn_id)
        if msg_type == "set_gain":
            return self._handle_set_gain(conn_id, sender_id, msg)
        if msg_type == "ping":
            return [ControlOut(conn_id, {"type": "pong", "t0_us": msg["t0_us"],
                                         "t1_us": self._now_us()})]
        if msg_type == "pong":
            if sender_id in self.members:
                rtt_us = self._now_us() - msg["t0_us"]
                self.members[sender_id].rtt_ms = rtt_us / 1000.0
            return []
        if msg_type == "leave":
            return self._handle_leave(conn_id, sender_id)
        return [ControlOut(conn_id, _error("unknown_type",
                                           f"unsupported message type {msg_type!r}"))]

    def _now_us(self) -> int:
        return tick_time_us(self.epoch_us, self.tick_index, self.config.frame_size)

    def _handle_join(self, conn_id: int, msg: dict) -> list:
        name = str(msg.get("name") or "").strip()
        if not name:
            return [ControlOut(conn_id, _error("bad_name", "name must be non-empty"))]
        try:
            section = Section(msg["section"])
        except ValueError:
            return [ControlOut(conn_id, _error("bad_section",
                                               f"unknown section {msg['section']!r}"))]
        role = msg.get("role", section.role)
        if role == "conductor":
            section = Section.CONDUCTOR
        elif role == "listener":
            section = Section.LISTENER

        # Idempotent rejoin: same name + claimed id keeps the session slot.
        claimed = msg.get("client_id")
        if claimed in self.members and self.members[claimed].info.name == name:
            member = self.members[claimed]
            self._conn_to_client[conn_id] = claimed
            member.conn_id = conn_id
            return [ControlOut(conn_id, self._welcome_msg(claimed))] + self._broadcast_roster()

        if section.is_conductor and any(m.info.section.is_conductor
                                        for m in self.members.values()):
            return [ControlOut(conn_id, _error("conductor_exists",
                                               "a conductor is already active"))]
        existing = {m.info.name for m in self.members.values()}
        unique = name
        suffix = 2
        while unique in existing:
            unique = f"{name}-{suffix}"
            suffix += 1

        client_id = self._next_client_id
        self._next_client_id += 1
        info = ClientInfo(client_id, unique, section)
        buffer = None
        if not section.is_listener:
            buffer = JitterBuffer(self.config.server_jb_depth,
                                  self.config.frame_size, self.config.channels)
        self.members[client_id] = _Member(info, conn_id, buffer)
        self._conn_to_client[conn_id] = client_id
        self.gains.register(info)
        return [ControlOut(conn_id, self._welcome_msg(client_id))] + self._broadcast_roster()

    def _welcome_msg(self, client_id: int) -> dict:
        return {"type": "welcome", "client_id": client_id,
                "session": {"frame_size": self.config.frame_size,
                            "channels": self.config.channels,
                            "sample_rate": self.config.sample_rate,
                            "server_jb_depth": self.config.server_jb_depth}}

    def _roster_msg(self) -> dict:
        clients = [{"client_id": m.info.client_id, "name": m.info.name,
                    "section": m.info.section.value, "role": m.info.role}
                   for m in sorted(self.members.values(), key=lambda m: m.info.client_id)]
        return {"type": "roster", "clients": clients}

    def _broadcast_roster(self) -> list:
        msg = self._roster_msg()
        outs = [ControlOut(m.conn_id, msg) for m in self.members.values()]
        outs.extend(ControlOut(c, msg) for c in self._console_conns)
        return outs

    def _gain_snapshot_msgs(self) -> list[dict]:
        msgs = []
        for listener_id, member in sorted(self.members.items()):
            if member.info.section.is_listener:
                continue
            for source_id, gain in sorted(self.gains.row(listener_id).items()):
                msgs.append({"type": "gain_state", "listener_id": listener_id,
                             "source_id": source_id, "gain": round(gain, 6)})
        return msgs

    def _handle_set_gain(self, conn_id: int, sender_id: int | None, msg: dict) -> list:
        listener_id = msg["listener_id"]
        sender = self.members.get(sender_id)
        is_conductor = sender is not None and sender.info.section.is_conductor
        if sender_id != listener_id and not is_conductor:
            return [ControlOut(conn_id, _error("forbidden",
                                               "only your own mix row is editable"))]
        source_id = msg["source_id"]
        if source_id not in self.members or listener_id not in self.members:
            return [ControlOut(conn_id, _error("unknown_client",
                                               "listener or source not in session"))]
        if self.members[source_id].info.section.is_listener:
            return [ControlOut(conn_id, _error("not_a_source",
                                               "listener-role clients are not mixable sources"))]
        clamped = min(max(float(msg["gain"]), 0.0), 4.0)
        self._pending_gains.append((listener_id, source_id, clamped))
        state = {"type": "gain_state", "listener_id": listener_id,
                 "source_id": source_id, "gain": clamped}
        outs = [ControlOut(self.members[listener_id].conn_id, state)]
        if conn_id != self.members[listener_id].conn_id:
            outs.append(ControlOut(conn_id, state))
        outs.extend(ControlOut(c, state) for c in self._console_conns)
        return outs

    def _handle_leave(self, conn_id: int, sender_id: int | None) -> list:
        if sender_id is None or sender_id not in self.members:
            return []
        del self.members[sender_id]
        self._conn_to_client.pop(conn_id, None)
        self.gains.unregister(sender_id)
        return self._broadcast_roster()

    # ----------------------------------------------------------- audio plane

    def on_datagram(self, data: bytes, now_us: int) -> None:
        self.counters["datagrams_in"] += 1
        try:
            frame, client_id, flags = wire.decode_datagram(data)
        except ProtocolError:
            self.counters["decode_errors"] += 1
            return
        member = self.members.get(client_id)
        if member is None:
            self.counters["unknown_client_drops"] += 1
            return
        if member.info.section.is_listener or member.buffer is None:
            self.counters["listener_audio_drops"] += 1
            return
        if flags & wire.FLAG_PROBE:
            # Echoed at this tick boundary with the server receive timestamp.
            echo = AudioFrame(frame.seq, now_us, frame.samples,
                              frame.frame_size, frame.channels)
            self._probe_echoes.append(DatagramOut(
                client_id, wire.encode_datagram(echo, client_id, wire.FLAG_PROBE)))
            self.counters["probe_echoes"] += 1
            return
        try:
            member.buffer.push(frame)
        except GeometryError:
            self.counters["decode_errors"] += 1

    # --------------------------------------------------------- gateway plane

    def handle_gateway(self, subscriber_id: int, msg: dict) -> list:
        if msg.get("type") == "gateway_hello":
            self.subscribers.add(subscriber_id)
            return []
        # One-way rule: anything else from a subscriber closes the stream.
        self.counters["subscriber_tx_rejected"] += 1
        self.subscribers.discard(subscriber_id)
        return [GatewayClose(subscriber_id,
                             _error("one_way", "gateway subscribers cannot send"))]

    def drop_subscriber(self, subscriber_id: int) -> None:
        self.subscribers.discard(subscriber_id)

    # ------------------------------------------------------------------ tick

    def tick(self, now_us: int | None = None) -> list:
        """One mix cycle: pop one frame per source, emit one mix per performer."""
        if now_us is None:
            now_us = self._now_us()
        for listener_id, source_id, gain in self._pending_gains:
            if listener_id in self.members and source_id in self.members:
                self.gains.set(listener_id, source_id, gain)
        self._pending_gains.clear()

        outs: list = []
        outs.extend(self._probe_echoes)
        self._probe_echoes.clear()

        popped: dict[int, AudioFrame] = {}
        for client_id, member in self.members.items():
            if member.buffer is None:
                continue
            result = member.buffer.pop()
            if result.kind is not PopKind.NOT_READY:
                popped[client_id] = result.frame

        seq = self.tick_index
        for client_id, member in self.members.items():
            if member.info.section.is_listener:
                continue
            if popped:
                mix = mix_for_listener(client_id, popped, self.gains,
                                       seq=seq, timestamp_us=now_us)
            else:
                continue  # nothing buffered anywhere: no datagrams this tick
            outs.append(DatagramOut(client_id, wire.encode_datagram(mix, client_id)))

        if popped and self.subscribers:
            reference = self._reference_mix(popped, seq, now_us)
            record = wire.encode_datagram(reference, GATEWAY_SOURCE_ID)
            record = wire.LENGTH_PREFIX.pack(len(record)) + record
            due = now_us + int(self.config.gateway_buffer_ms * 1000)
            outs.extend(GatewayOut(sub, record, due) for sub in sorted(self.subscribers))

        self.tick_index += 1
        self.counters["ticks"] += 1
        return outs

    def _reference_mix(self, popped: dict[int, AudioFrame], seq: int,
                       now_us: int) -> AudioFrame:
        """Ensemble mix for gateway listeners: every source at gain 1.0."""
        unity = GainMatrix(DefaultGainParams(1.0, 1.0, 1.0, 1.0))
        unity.register(ClientInfo(GATEWAY_SOURCE_ID, "gateway", Section.LISTENER))
        for member in self.members.values():
            unity.register(member.info)
        mix = mix_for_listener(GATEWAY_SOURCE_ID, popped, unity,
                               seq=seq, timestamp_us=now_us)
        return apply_master_limit(mix, self.config.master_ceiling)

    # ------------------------------------------------------------- snapshots

    def stats_msg(self) -> dict:
        clients = []
        for client_id, member in sorted(self.members.items()):
            entry = {"client_id": client_id, "name": member.info.name,
                     "section": member.info.section.value,
                     "rtt_ms": member.rtt_ms,
                     "jitter_buffer": member.buffer.stats.as_dict() if member.buffer else None}
            clients.append(entry)
        return {"type": "stats", "clients": clients, "counters": dict(self.counters)}


def _error(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}
