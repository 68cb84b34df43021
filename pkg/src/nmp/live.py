"""Wall-clock transports: asyncio UDP/TCP server and client endpoints.

The same ServerEngine / ClientEngine state machines that run under the
virtual clock are driven here by real sockets and loop timers.  The console
bridge (FastAPI app with /ws and the /api snapshots) is attached to the
server's event loop.
"""
from __future__ import annotations

import asyncio
import logging
import time

from . import wire
from .client import AudioSend, ClientConfig, ClientEngine, ControlSend
from .engine import (ControlOut, DatagramOut, GatewayClose, GatewayOut,
                     ServerEngine, SessionConfig)
from .errors import NmpError

log = logging.getLogger("nmp.live")

DEFAULT_AUDIO_PORT = 22124
DEFAULT_CONTROL_PORT = 22125
DEFAULT_GATEWAY_PORT = 22126
DEFAULT_HTTP_PORT = 8080

PING_INTERVAL_S = 2.0
STATS_INTERVAL_S = 1.0
MIX_TIMEOUT_S = 3.0
MAX_REJOINS = 3


class _Clock:
    def __init__(self):
        self._t0 = time.monotonic()

    def now_us(self) -> int:
        return int((time.monotonic() - self._t0) * 1_000_000)

    def to_loop_time(self, us: int, loop) -> float:
        return loop.time() - (time.monotonic() - self._t0) + us / 1_000_000


class _UdpProtocol(asyncio.DatagramProtocol):
    def __init__(self, on_datagram):
        self.on_datagram = on_datagram
        self.transport = None

    def connection_made(self, transport):
        self.transport = transport

    def datagram_received(self, data, addr):
        self.on_datagram(data, addr)


class LiveServer:
    def __init__(self, config: SessionConfig | None = None,
                 audio_port: int = DEFAULT_AUDIO_PORT,
                 control_port: int = DEFAULT_CONTROL_PORT,
                 gateway_port: int = DEFAULT_GATEWAY_PORT,
                 http_port: int | None = DEFAULT_HTTP_PORT,
                 host: str = "127.0.0.1"):
        self.engine = ServerEngine(config)
        self.host = host
        self.audio_port = audio_port
        self.control_port = control_port
        self.gateway_port = gateway_port
        self.http_port = http_port
        self.clock = _Clock()
        self._udp = None
        self._addr_by_client: dict[int, tuple] = {}
        self._control_writers: dict[int, asyncio.StreamWriter] = {}
        self._console_senders: dict[int, object] = {}  # conn_id -> async send(msg)
        self._gateway_writers: dict[int, asyncio.StreamWriter] = {}
        self._next_conn_id = 0
        self._servers = []
        self._tasks = []
        self._tick_n = 0
        self._http_server = None

    # ------------------------------------------------------------ dispatch

    def dispatch(self, outs) -> None:
        loop = asyncio.get_running_loop()
        for out in outs:
            if isinstance(out, ControlOut):
                writer = self._control_writers.get(out.conn_id)
                if writer is not None and not writer.is_closing():
                    writer.write(wire.encode_control(out.msg))
                sender = self._console_senders.get(out.conn_id)
                if sender is not None:
                    loop.create_task(sender(out.msg))
            elif isinstance(out, DatagramOut):
                addr = self._addr_by_client.get(out.client_id)
                if addr is not None and self._udp is not None:
                    self._udp.transport.sendto(out.payload, addr)
            elif isinstance(out, GatewayOut):
                delay = max(0.0, (out.due_us - self.clock.now_us()) / 1_000_000)
                loop.call_later(delay, self._gateway_write, out.subscriber_id,
                                out.record)
            elif isinstance(out, GatewayClose):
                writer = self._gateway_writers.pop(out.subscriber_id, None)
                if writer is not None:
                    writer.write(wire.encode_control(out.msg))
                    writer.close()

    def _gateway_write(self, subscriber_id: int, record: bytes) -> None:
        writer = self._gateway_writers.get(subscriber_id)
        if writer is None or writer.is_closing():
            return
        backlog = writer.transport.get_write_buffer_size()
        limit = self._backlog_limit_bytes()
        if backlog > limit:
            log.warning("gateway subscriber %d backlog %d bytes, disconnecting",
                        subscriber_id, backlog)
            self.engine.drop_subscriber(subscriber_id)
            self._gateway_writers.pop(subscriber_id, None)
            writer.close()
            return
        writer.write(record)

    def _backlog_limit_bytes(self) -> int:
        cfg = self.engine.config
        frames = cfg.gateway_backlog_limit_ms / 1000 * 48_000 / cfg.frame_size
        return int(frames) * (wire.HEADER_LEN + 4 + 2 * cfg.frame_size * cfg.channels)

    # ------------------------------------------------------------- serving

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        transport, protocol = await loop.create_datagram_endpoint(
            lambda: _UdpProtocol(self._on_udp),
            local_addr=(self.host, self.audio_port))
        self._udp = protocol
        self._servers.append(transport)
        ctl = await asyncio.start_server(self._serve_control, self.host,
                                         self.control_port)
        gw = await asyncio.start_server(self._serve_gateway, self.host,
                                        self.gateway_port)
        self._servers.extend([ctl, gw])
        self._tasks.append(loop.create_task(self._tick_loop()))
        self._tasks.append(loop.create_task(self._ping_loop()))
        if self.http_port is not None:
            from .console_api import build_console_app
            import uvicorn
            app = build_console_app(self)
            config = uvicorn.Config(app, host=self.host, port=self.http_port,
                                    log_level="warning", loop="asyncio")
            self._http_server = uvicorn.Server(config)
            self._tasks.append(loop.create_task(self._http_server.serve()))
        log.info("server listening: audio udp/%d control tcp/%d gateway tcp/%d",
                 self.audio_port, self.control_port, self.gateway_port)

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        if self._http_server is not None:
            self._http_server.should_exit = True
        for srv in self._servers:
            srv.close()
        await asyncio.gather(*self._tasks, return_exceptions=True)

    def _on_udp(self, data: bytes, addr) -> None:
        try:
            _frame, client_id, _flags = wire.decode_datagram(data)
            self._addr_by_client[client_id] = addr
        except NmpError:
            pass
        self.engine.on_datagram(data, self.clock.now_us())

    async def _tick_loop(self) -> None:
        loop = asyncio.get_running_loop()
        frame_s = self.engine.config.frame_size / 48_000
        start = loop.time()
        while True:
            self.dispatch(self.engine.tick(self.clock.now_us()))
            self._tick_n += 1
            await asyncio.sleep(max(0.0, start + self._tick_n * frame_s - loop.time()))

    async def _ping_loop(self) -> None:
        while True:
            await asyncio.sleep(PING_INTERVAL_S)
            now = self.clock.now_us()
            for conn_id, writer in list(self._control_writers.items()):
                if not writer.is_closing():
                    writer.write(wire.encode_control({"type": "ping", "t0_us": now}))

    def alloc_conn(self) -> int:
        self._next_conn_id += 1
        return self._next_conn_id

    async def _serve_control(self, reader, writer) -> None:
        conn_id = self.alloc_conn()
        self._control_writers[conn_id] = writer
        decoder = wire.ControlStreamDecoder()
        try:
            while True:
                data = await reader.read(4096)
                if not data:
                    break
                for msg in decoder.feed(data):
                    self.dispatch(self.engine.handle_control(conn_id, msg))
                await writer.drain()
        except (ConnectionError, NmpError) as exc:
            log.info("control conn %d closed: %s", conn_id, exc)
        finally:
            self._control_writers.pop(conn_id, None)
            self.dispatch(self.engine.drop_conn(conn_id))
            writer.close()

    async def _serve_gateway(self, reader, writer) -> None:
        sub_id = self.alloc_conn()
        self._gateway_writers[sub_id] = writer
        decoder = wire.ControlStreamDecoder()
        try:
            while True:
                data = await reader.read(4096)
                if not data:
                    break
                for msg in decoder.feed(data):
                    self.dispatch(self.engine.handle_gateway(sub_id, msg))
                if sub_id not in self._gateway_writers:
                    return
        except (ConnectionError, NmpError):
            pass
        finally:
            self.engine.drop_subscriber(sub_id)
            self._gateway_writers.pop(sub_id, None)
            writer.close()


class LiveClient:
    def __init__(self, config: ClientConfig, server_host: str = "127.0.0.1",
                 audio_port: int = DEFAULT_AUDIO_PORT,
                 control_port: int = DEFAULT_CONTROL_PORT):
        self.engine = ClientEngine(config)
        self.server_host = server_host
        self.audio_port = audio_port
        self.control_port = control_port
        self.clock = _Clock()
        self._udp = None
        self._reader = None
        self._writer = None
        self._rejoins = 0

    async def _connect(self) -> None:
        loop = asyncio.get_running_loop()
        transport, protocol = await loop.create_datagram_endpoint(
            lambda: _UdpProtocol(self._on_udp),
            remote_addr=(self.server_host, self.audio_port))
        self._udp = protocol
        self._reader, self._writer = await asyncio.open_connection(
            self.server_host, self.control_port)
        self._writer.write(wire.encode_control(self.engine.join_msg()))
        await self._writer.drain()

    def _on_udp(self, data: bytes, addr) -> None:
        self.engine.on_datagram(data, self.clock.now_us())

    def _send_outs(self, outs) -> None:
        for out in outs:
            if isinstance(out, ControlSend):
                self._writer.write(wire.encode_control(out.msg))

    async def run(self, duration_s: float | None = None) -> dict:
        """Join, stream until duration (or forever), then leave and flush."""
        await self._connect()
        loop = asyncio.get_running_loop()
        control_task = loop.create_task(self._control_loop())
        deadline = None if duration_s is None else loop.time() + duration_s
        try:
            tick_n = 0
            start = None
            while deadline is None or loop.time() < deadline:
                if self.engine.session is None:
                    await asyncio.sleep(0.01)
                    continue
                if start is None:
                    start = loop.time()
                now = self.clock.now_us()
                outs = self.engine.tick(now)
                for out in outs:
                    if isinstance(out, AudioSend):
                        delay = max(0.0, (out.due_us - now) / 1_000_000)
                        loop.call_later(delay, self._send_audio, out.payload)
                if (self.engine.last_mix_us is not None
                        and now - self.engine.last_mix_us > MIX_TIMEOUT_S * 1_000_000):
                    await self._rejoin()
                tick_n += 1
                frame_s = self.engine.session["frame_size"] / 48_000
                await asyncio.sleep(max(0.0, start + tick_n * frame_s - loop.time()))
        finally:
            control_task.cancel()
            try:
                self._writer.write(wire.encode_control({"type": "leave"}))
                await self._writer.drain()
                self._writer.close()
            except (ConnectionError, AttributeError):
                pass
            self.engine.flush()
        return self.engine.session_record()

    def _send_audio(self, payload: bytes) -> None:
        if self._udp is not None and self._udp.transport is not None:
            self._udp.transport.sendto(payload)

    async def _rejoin(self) -> None:
        self._rejoins += 1
        if self._rejoins > MAX_REJOINS:
            raise NmpError(f"no mixes for {MIX_TIMEOUT_S}s and "
                           f"{MAX_REJOINS} rejoins exhausted")
        log.warning("no mixes for %.1fs, rejoining (%d/%d)", MIX_TIMEOUT_S,
                    self._rejoins, MAX_REJOINS)
        try:
            self._writer.close()
        except ConnectionError:
            pass
        self.engine.last_mix_us = self.clock.now_us()
        await self._connect()

    async def _control_loop(self) -> None:
        decoder = wire.ControlStreamDecoder()
        while True:
            data = await self._reader.read(4096)
            if not data:
                await asyncio.sleep(0.1)
                continue
            for msg in decoder.feed(data):
                self._send_outs(self.engine.handle_control(msg, self.clock.now_us()))
            if self._writer is not None:
                await self._writer.drain()


class GatewayListener:
    """One-way subscriber: receives the ensemble mix records over TCP."""

    def __init__(self, server_host: str = "127.0.0.1",
                 gateway_port: int = DEFAULT_GATEWAY_PORT):
        self.server_host = server_host
        self.gateway_port = gateway_port
        self.frames = []

    async def run(self, duration_s: float, out_path=None) -> int:
        reader, writer = await asyncio.open_connection(self.server_host,
                                                       self.gateway_port)
        writer.write(wire.encode_control({"type": "gateway_hello"}))
        await writer.drain()
        buf = bytearray()
        loop = asyncio.get_running_loop()
        deadline = loop.time() + duration_s
        while loop.time() < deadline:
            try:
                data = await asyncio.wait_for(reader.read(4096),
                                              timeout=max(0.05, deadline - loop.time()))
            except asyncio.TimeoutError:
                continue
            if not data:
                break
            buf.extend(data)
            while len(buf) >= 4:
                (length,) = wire.LENGTH_PREFIX.unpack_from(buf)
                if len(buf) < 4 + length:
                    break
                frame, _cid, _flags = wire.decode_datagram(bytes(buf[4:4 + length]))
                self.frames.append(frame)
                del buf[:4 + length]
        writer.close()
        if out_path is not None and self.frames:
            import numpy as np
            from .wavio import write_wav
            write_wav(out_path, np.concatenate([f.samples for f in self.frames]),
                      self.frames[0].channels)
        return len(self.frames)
