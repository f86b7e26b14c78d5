"""Transport-level tests: NDJSON over TCP end to end, and the WebSocket
adapter through the ASGI test client."""

import asyncio
import json

import pytest

from visrooms.layout import LayoutParams
from visrooms.model import Document
from visrooms.protocol import Replica, decode_message, encode_message
from visrooms.rooms import RoomConfig
from visrooms.server import ServerState, build_ws_app, serve_tcp


def config():
    return RoomConfig(
        room_id="net",
        documents=(
            Document(id="d1", title="One", body="a b"),
            Document(id="d2", title="Two", body="c d"),
        ),
        layout_params=LayoutParams(seed=5),
    )


class TcpClient:
    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer
        self.replica = Replica()

    async def send(self, msg_type, room, body):
        self.writer.write(
            encode_message(
                {"type": msg_type, "room": room, "protocolVersion": "1", "body": body}
            )
        )
        await self.writer.drain()

    async def recv(self, timeout=2.0):
        line = await asyncio.wait_for(self.reader.readline(), timeout)
        msg = decode_message(line)
        self.replica.handle(msg)
        return msg

    async def recv_until(self, msg_type, timeout=2.0, limit=50):
        for _ in range(limit):
            msg = await self.recv(timeout)
            if msg["type"] == msg_type:
                return msg
        raise AssertionError(f"never saw {msg_type}")


async def _connect(port):
    reader, writer = await asyncio.open_connection("127.0.0.1", port)
    return TcpClient(reader, writer)


def test_tcp_two_clients_share_edits_and_rejections():
    async def scenario():
        state = ServerState(config())
        server = await serve_tcp(state, "127.0.0.1", 0)
        port = server.sockets[0].getsockname()[1]

        a = await _connect(port)
        b = await _connect(port)
        await a.send("Join", "net", {"name": "alice", "platform": "flat2d"})
        ack_a = await a.recv_until("JoinAck")
        await b.send("Join", "net", {"name": "bob", "platform": "spatial3d"})
        await b.recv_until("JoinAck")
        await a.recv_until("Awareness")  # roster notice about bob

        # op path: a adds a node, both sides converge on the same version
        await a.send("OpSubmit", "net", {"kind": "AddNode", "payload": {"label": "clue", "position": [1, 2, 3]}, "requestId": "r1"})
        applied_a = await a.recv_until("OpApplied")
        applied_b = await b.recv_until("OpApplied")
        assert applied_a["body"]["version"] == applied_b["body"]["version"] == 1
        node_id = applied_a["body"]["op"]["payload"]["nodeId"]
        assert a.replica.state_hash() == b.replica.state_hash()

        # second node + link, then a duplicate link: private rejection
        await b.send("OpSubmit", "net", {"kind": "AddNode", "payload": {"label": "x"}})
        applied = await b.recv_until("OpApplied")
        node2 = applied["body"]["op"]["payload"]["nodeId"]
        await b.send("OpSubmit", "net", {"kind": "AddLink", "payload": {"a": node_id, "b": node2, "label": "ties"}})
        await b.recv_until("OpApplied")
        await b.send("OpSubmit", "net", {"kind": "AddLink", "payload": {"a": node2, "b": node_id, "label": "dup"}, "requestId": "dup-1"})
        rejected = await b.recv_until("OpRejected")
        assert rejected["body"]["reason"] == "DuplicateLink"
        assert rejected["body"]["requestId"] == "dup-1"

        # awareness path: cursor hint fans out to the other client
        await a.send("Awareness", "net", {"cursor": {"entries": [{"node": node_id, "w": 1.0}], "sourcePlatform": "flat2d", "ts": 1}})
        awareness = await b.recv_until("Awareness")
        users = [c["user"] for c in awareness["body"]["changes"]]
        assert ack_a["body"]["userId"] in users

        # protocol version mismatch gets an Error
        a.writer.write(b'{"type":"Join","room":"net","protocolVersion":"9","body":{}}\n')
        await a.writer.drain()
        err = await a.recv_until("Error")
        assert "version" in err["body"]["message"]

        server.close()
        await server.wait_closed()

    asyncio.run(scenario())


def test_tcp_leave_recycles_and_notifies():
    async def scenario():
        state = ServerState(config())
        server = await serve_tcp(state, "127.0.0.1", 0)
        port = server.sockets[0].getsockname()[1]

        a = await _connect(port)
        b = await _connect(port)
        await a.send("Join", "net", {"name": "alice", "platform": "flat2d"})
        await a.recv_until("JoinAck")
        await b.send("Join", "net", {"name": "bob", "platform": "flat2d"})
        ack_b = await b.recv_until("JoinAck")

        b.writer.close()  # disconnect without a Leave message
        leave = await a.recv_until("Leave")
        assert leave["body"]["user"] == ack_b["body"]["userId"]

        c = await _connect(port)
        await c.send("Join", "net", {"name": "carol", "platform": "flat2d"})
        ack_c = await c.recv_until("JoinAck")
        assert ack_c["body"]["color"] == ack_b["body"]["color"]  # recycled

        server.close()
        await server.wait_closed()

    asyncio.run(scenario())


def test_ws_adapter_speaks_the_same_protocol():
    pytest.importorskip("fastapi")
    from fastapi.testclient import TestClient

    app = build_ws_app(ServerState(config()))
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "Join", "room": "net", "protocolVersion": "1", "body": {"name": "w", "platform": "flat2d"}}))
        ack = json.loads(ws.receive_text())
        assert ack["type"] == "JoinAck"
        assert ack["body"]["snapshot"]["graph"]["version"] == 0
        ws.send_text(json.dumps({"type": "OpSubmit", "room": "net", "protocolVersion": "1", "body": {"kind": "AddNode", "payload": {"label": "ws-node"}}}))
        applied = json.loads(ws.receive_text())
        assert applied["type"] == "OpApplied"
        assert applied["body"]["version"] == 1
