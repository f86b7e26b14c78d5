"""Network front-end for rooms: NDJSON over TCP, with an optional WebSocket
adapter for browser clients (one text frame = one NDJSON line).

All state changes run on the event loop, so each room's operations are
naturally serialized; rooms are independent. Transport work (reads, writes)
is concurrent per connection.
"""

from __future__ import annotations

import asyncio
import logging
from pathlib import Path
from typing import Any, Optional

from .model import Platform
from .protocol import ProtocolError, decode_message, encode_message
from .rooms import RoomConfig, RoomEngine, RoomFullError, make_message

log = logging.getLogger("visrooms.server")


class ServerState:
    """Rooms plus connection registry, shared by all transports."""

    def __init__(self, default_config: RoomConfig, log_dir: Optional[str | Path] = None):
        self.default_config = default_config
        self.log_dir = log_dir
        self.rooms: dict[str, RoomEngine] = {}
        self.sinks: dict[tuple[str, str], Any] = {}  # (room, user) -> send callable
        self._timers: dict[tuple[str, str], asyncio.TimerHandle] = {}

    def room(self, room_id: str) -> RoomEngine:
        engine = self.rooms.get(room_id)
        if engine is None:
            config = self.default_config
            if config.room_id != room_id:
                config = RoomConfig(
                    room_id=room_id,
                    documents=config.documents,
                    layout_params=config.layout_params,
                    semicircle_radius=config.semicircle_radius,
                )
            engine = RoomEngine(config, log_dir=self.log_dir)
            self.rooms[room_id] = engine
            log.info("room %s created (%d documents)", room_id, len(config.documents))
        return engine

    def route(self, room_id: str, outgoing: list[tuple[str, dict]]) -> None:
        engine = self.rooms.get(room_id)
        for recipient, message in outgoing:
            if recipient == "*":
                targets = [u for (r, u) in self.sinks if r == room_id]
            else:
                targets = [recipient]
            data = encode_message(message)
            for user in targets:
                sink = self.sinks.get((room_id, user))
                if sink is not None:
                    sink(data)
        if engine is not None:
            self._arm_timers(room_id, engine)

    def _arm_timers(self, room_id: str, engine: RoomEngine) -> None:
        loop = asyncio.get_event_loop()
        for name, due, action in (
            ("awareness", engine.awareness_due_at(), engine.maybe_flush_awareness),
            ("layout", engine.layout_due_at(), engine.run_layout_refresh),
        ):
            key = (room_id, name)
            handle = self._timers.pop(key, None)
            if handle is not None:
                handle.cancel()
            if due is None:
                continue
            delay = max(0.0, (due - engine.clock.now_ms()) / 1000.0)
            self._timers[key] = loop.call_later(
                delay, lambda a=action, e=engine, r=room_id: self.route(r, a(e.clock.now_ms()))
            )

    def disconnect(self, room_id: Optional[str], user_id: Optional[str]) -> None:
        if room_id is None or user_id is None:
            return
        self.sinks.pop((room_id, user_id), None)
        engine = self.rooms.get(room_id)
        if engine is not None:
            self.route(room_id, engine.leave(user_id))


def _error_message(room: str, code: str, message: str) -> dict:
    return make_message("Error", room, {"code": code, "message": message})


class _Connection:
    """Protocol logic for one client, independent of transport framing."""

    def __init__(self, state: ServerState, send: Any):
        self.state = state
        self.send = send  # callable(bytes)
        self.room_id: Optional[str] = None
        self.user_id: Optional[str] = None

    def handle_line(self, line: str | bytes) -> None:
        try:
            msg = decode_message(line)
        except ProtocolError as exc:
            self.send(encode_message(_error_message("", "Protocol", str(exc))))
            return
        msg_type = msg["type"]
        room_id = msg["room"]
        body = msg.get("body") or {}

        if msg_type == "Join":
            self._handle_join(room_id, body)
            return
        if self.user_id is None or self.room_id != room_id:
            self.send(encode_message(_error_message(room_id, "NotJoined", "join the room first")))
            return
        engine = self.state.room(room_id)
        if msg_type == "OpSubmit":
            outgoing = engine.submit_op(
                self.user_id, body.get("kind", ""), body.get("payload", {}), body.get("requestId")
            )
            self.state.route(room_id, outgoing)
        elif msg_type == "Awareness":
            self.state.route(room_id, engine.publish_awareness(self.user_id, body))
        elif msg_type == "Leave":
            self.state.disconnect(room_id, self.user_id)
            self.room_id = self.user_id = None
        else:
            self.send(
                encode_message(_error_message(room_id, "Protocol", f"unexpected {msg_type}"))
            )

    def _handle_join(self, room_id: str, body: dict) -> None:
        engine = self.state.room(room_id)
        try:
            platform = Platform(body.get("platform", "flat2d"))
        except ValueError:
            self.send(encode_message(_error_message(room_id, "Protocol", "bad platform")))
            return
        try:
            session, outgoing = engine.join(body.get("name", "anonymous"), platform)
        except RoomFullError as exc:
            self.send(encode_message(_error_message(room_id, "RoomFull", str(exc))))
            return
        self.room_id = room_id
        self.user_id = session.id
        self.state.sinks[(room_id, session.id)] = self.send
        self.state.route(room_id, outgoing)

    def connection_lost(self) -> None:
        self.state.disconnect(self.room_id, self.user_id)


async def serve_tcp(state: ServerState, host: str, port: int) -> asyncio.AbstractServer:
    async def on_client(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        def send(data: bytes) -> None:
            if not writer.is_closing():
                writer.write(data)

        conn = _Connection(state, send)
        peer = writer.get_extra_info("peername")
        log.info("connection from %s", peer)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if line.strip():
                    conn.handle_line(line)
                await writer.drain()
        except (ConnectionResetError, asyncio.IncompleteReadError):
            pass
        finally:
            conn.connection_lost()
            writer.close()
            log.info("connection closed %s", peer)

    server = await asyncio.start_server(on_client, host, port)
    return server


def build_ws_app(state: ServerState):
    """FastAPI app exposing the same protocol over WebSocket at /ws."""
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    app = FastAPI(title="visrooms")

    async def ws_endpoint(ws):
        await ws.accept()
        outbox: asyncio.Queue[bytes] = asyncio.Queue()
        conn = _Connection(state, outbox.put_nowait)

        async def pump():
            while True:
                data = await outbox.get()
                await ws.send_text(data.decode("utf-8").rstrip("\n"))

        pump_task = asyncio.get_event_loop().create_task(pump())
        try:
            while True:
                text = await ws.receive_text()
                if text.strip():
                    conn.handle_line(text)
        except WebSocketDisconnect:
            pass
        finally:
            pump_task.cancel()
            conn.connection_lost()

    # postponed-evaluation-proof annotation (WebSocket is a lazy import)
    ws_endpoint.__annotations__ = {"ws": WebSocket}
    app.websocket("/ws")(ws_endpoint)
    return app


async def run_server(
    config: RoomConfig,
    listen: str,
    log_dir: Optional[str | Path] = None,
    transport: str = "tcp",
) -> None:
    host, _, port_s = listen.rpartition(":")
    host = host or "127.0.0.1"
    port = int(port_s)
    state = ServerState(config, log_dir=log_dir)
    if transport == "tcp":
        server = await serve_tcp(state, host, port)
        log.info("serving NDJSON/TCP on %s:%d (room %s)", host, port, config.room_id)
        async with server:
            await server.serve_forever()
    elif transport == "ws":
        import uvicorn

        app = build_ws_app(state)
        log.info("serving NDJSON/WebSocket on %s:%d/ws (room %s)", host, port, config.room_id)
        await uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning")).serve()
    else:
        raise ValueError(f"unknown transport {transport!r}")
