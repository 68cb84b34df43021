"""Console bridge: FastAPI app exposing the control plane to browsers.

GET /api/roster and /api/stats return the same documents that flow over the
control channel; /ws carries them live and accepts set_gain / console_hello
messages from the mixing console.
"""
from __future__ import annotations

import asyncio
import logging

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from .errors import ProtocolError
from .wire import validate_control

log = logging.getLogger("nmp.console")

STATS_PUSH_INTERVAL_S = 1.0


class RosterEntry(BaseModel):
    client_id: int
    name: str
    section: str
    role: str


class RosterResponse(BaseModel):
    type: str = "roster"
    clients: list[RosterEntry]


class JitterCounters(BaseModel):
    received: int
    late: int
    lost: int
    duplicate: int
    overflow: int
    concealed: int


class ClientStats(BaseModel):
    client_id: int
    name: str
    section: str
    rtt_ms: float | None = None
    jitter_buffer: JitterCounters | None = None


class StatsResponse(BaseModel):
    type: str = "stats"
    clients: list[ClientStats]
    counters: dict[str, int]


def build_console_app(server) -> FastAPI:
    """`server` is a LiveServer: provides .engine, .dispatch and .alloc_conn."""
    app = FastAPI(title="nmp console bridge")
    engine = server.engine

    @app.get("/api/roster", response_model=RosterResponse)
    def get_roster():
        return engine._roster_msg()

    @app.get("/api/stats", response_model=StatsResponse)
    def get_stats():
        return engine.stats_msg()

    @app.websocket("/ws")
    async def console_socket(ws: WebSocket):
        await ws.accept()
        conn_id = server.alloc_conn()

        async def sender(msg: dict):
            try:
                await ws.send_json(msg)
            except Exception:
                pass

        server._console_senders[conn_id] = sender
        server.dispatch(engine.handle_control(conn_id, {"type": "console_hello"}))

        async def stats_pusher():
            while True:
                await asyncio.sleep(STATS_PUSH_INTERVAL_S)
                await sender(engine.stats_msg())

        pusher = asyncio.get_running_loop().create_task(stats_pusher())
        try:
            while True:
                msg = await ws.receive_json()
                try:
                    validate_control(msg)
                except ProtocolError as exc:
                    await sender({"type": "error", "code": "protocol",
                                  "message": str(exc)})
                    continue
                server.dispatch(engine.handle_control(conn_id, msg))
        except WebSocketDisconnect:
            pass
        finally:
            pusher.cancel()
            server._console_senders.pop(conn_id, None)
            server.dispatch(engine.drop_conn(conn_id))

    return app
