"""Wire protocol: newline-delimited JSON messages over any ordered, reliable
byte stream, plus the client-side replica that reconstructs room state from
the message flow.

Every message is one UTF-8 line: {"type", "room", "protocolVersion", "body"}.
Clients apply OpApplied deltas in seq order (buffering anything that arrives
early) and treat StateSnapshot as a full replacement, so a mid-session joiner
converges to the same state hash as a client present from the start.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from .graph import GraphState, apply_delta, state_hash
from .model import PROTOCOL_VERSION

MESSAGE_TYPES = frozenset(
    {
        "Join",
        "JoinAck",
        "OpSubmit",
        "OpApplied",
        "OpRejected",
        "StateSnapshot",
        "Awareness",
        "Leave",
        "Error",
    }
)


class ProtocolError(ValueError):
    pass


def encode_message(msg: dict[str, Any]) -> bytes:
    return (json.dumps(msg, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def decode_message(line: str | bytes) -> dict[str, Any]:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {exc}")
    if not isinstance(msg, dict):
        raise ProtocolError("message must be an object")
    if msg.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg.get('type')!r}")
    if msg.get("protocolVersion") != PROTOCOL_VERSION:
        raise ProtocolError(
            f"protocol version mismatch: got {msg.get('protocolVersion')!r}, "
            f"want {PROTOCOL_VERSION!r}"
        )
    if "room" not in msg or "body" not in msg:
        raise ProtocolError("message must carry room and body")
    return msg


class Replica:
    """A client's local reconstruction of room state from server messages."""

    def __init__(self):
        self.user_id: Optional[str] = None
        self.color: Optional[tuple[int, int, int]] = None
        self.warning: Optional[str] = None
        self.graph: GraphState = GraphState()
        self.layout: dict[str, Any] = {"positions3": {}, "positions2": {}, "pinned": []}
        self.documents: list[dict[str, Any]] = []
        self.panel_poses: list[dict[str, Any]] = []
        self.sessions: dict[str, dict[str, Any]] = {}
        self.rejections: list[dict[str, Any]] = []
        self.applied_ops: list[dict[str, Any]] = []
        self._pending_deltas: dict[int, dict[str, Any]] = {}

    def handle(self, msg: dict[str, Any]) -> None:
        body = msg["body"]
        kind = msg["type"]
        if kind == "JoinAck":
            self.user_id = body["userId"]
            self.color = tuple(body["color"])
            self.warning = body.get("warning")
            self._load_snapshot(body["snapshot"])
        elif kind == "StateSnapshot":
            self._load_snapshot(body)
        elif kind == "OpApplied":
            self._queue_delta(body)
        elif kind == "OpRejected":
            self.rejections.append(body)
        elif kind == "Awareness":
            for change in body.get("changes", []):
                entry = self.sessions.setdefault(change["user"], {})
                for key, value in change.items():
                    if key != "user":
                        entry[key] = value
        elif kind == "Leave":
            self.sessions.pop(body["user"], None)

    def _load_snapshot(self, snapshot: dict[str, Any]) -> None:
        self.graph = GraphState.from_dict(snapshot["graph"])
        self.layout = snapshot["layout"]
        self.documents = snapshot["documents"]
        self.panel_poses = snapshot.get("panelPoses", [])
        self.sessions = {s["id"]: dict(s) for s in snapshot.get("sessions", [])}
        # Flush any buffered deltas that now apply.
        self._drain_pending()

    def _queue_delta(self, body: dict[str, Any]) -> None:
        version = body["version"]
        if version <= self.graph.version:
            return  # already included in a snapshot
        self._pending_deltas[version] = body
        self._drain_pending()

    def _drain_pending(self) -> None:
        while self.graph.version + 1 in self._pending_deltas:
            body = self._pending_deltas.pop(self.graph.version + 1)
            self.graph = apply_delta(self.graph, body["graphDelta"])
            self.applied_ops.append(body["op"])
            layout_delta = body.get("layoutDelta") or {}
            for nid, p3 in layout_delta.get("positions3", {}).items():
                self.layout["positions3"][nid] = p3
            for nid, p2 in layout_delta.get("positions2", {}).items():
                self.layout["positions2"][nid] = p2
            for nid in layout_delta.get("removed", ()):
                self.layout["positions3"].pop(nid, None)
                self.layout["positions2"].pop(nid, None)
        # Drop anything stale a snapshot has overtaken.
        for version in [v for v in self._pending_deltas if v <= self.graph.version]:
            del self._pending_deltas[version]

    def state_hash(self) -> str:
        return state_hash(self.graph)

    def reading_status(self) -> dict[str, list[str]]:
        table: dict[str, list[str]] = {d["id"]: [] for d in self.documents}
        for session in self.sessions.values():
            doc = session.get("currentDocument")
            if doc and doc in table:
                table[doc].append(session.get("name", "?"))
        return table
