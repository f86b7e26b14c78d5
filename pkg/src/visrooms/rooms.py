"""Room lifecycle and the server-side state machine.

One RoomEngine serializes everything that happens in a room: joins, operation
sequencing, layout bookkeeping, awareness coalescing, and journaling. It is
transport-agnostic and clock-agnostic: callers inject a millisecond clock and
deliver the (recipient, message) pairs it returns. Only applied operations
are sequenced and logged; rejected submissions get a private OpRejected reply
and consume nothing.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from . import graph as graphmod
from .graph import GraphState, graph_delta, state_hash
from .layout import (
    LayoutParams,
    LayoutResult,
    PanelPose,
    compute_layout,
    semicircle_doc_layout,
)
from .model import (
    COLOR_PALETTE,
    STRUCTURAL_KINDS,
    MAX_USERS_PER_ROOM,
    PROTOCOL_VERSION,
    CursorHint,
    Document,
    HeadPose,
    NodeRecord,
    OpKind,
    Operation,
    OperationRejected,
    Platform,
    RejectReason,
    UserSession,
)
from .persistence import OplogWriter

AWARENESS_FLUSH_MS = 50  # fan-out rate cap: 20 Hz per room
LAYOUT_DEBOUNCE_MS = 250


class RoomFullError(Exception):
    pass


class WallClock:
    """Milliseconds since construction (room start)."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000.0)


@dataclass(frozen=True)
class RoomConfig:
    room_id: str
    documents: tuple[Document, ...]
    layout_params: LayoutParams = LayoutParams()
    semicircle_radius: float = 100.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "roomId": self.room_id,
            "documents": [{"id": d.id, "title": d.title, "body": d.body} for d in self.documents],
            "layoutParams": self.layout_params.to_dict(),
            "semicircleRadius": self.semicircle_radius,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RoomConfig":
        return cls(
            room_id=d["roomId"],
            documents=tuple(Document.from_dict(doc) for doc in d["documents"]),
            layout_params=LayoutParams.from_dict(d.get("layoutParams", {})),
            semicircle_radius=float(d.get("semicircleRadius", 100.0)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RoomConfig":
        import json

        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_message(msg_type: str, room_id: str, body: dict[str, Any]) -> dict[str, Any]:
    return {
        "type": msg_type,
        "room": room_id,
        "protocolVersion": PROTOCOL_VERSION,
        "body": body,
    }


# (recipient, message): recipient is a user id, or "*" for every joined user.
Outgoing = tuple[str, dict]


@dataclass
class UserCounters:
    ops_by_kind: dict[str, int] = field(default_factory=dict)
    document_retrievals: int = 0
    nodes_created: int = 0
    links_created: int = 0


class RoomEngine:
    def __init__(
        self,
        config: RoomConfig,
        clock=None,
        log_dir: Optional[str | Path] = None,
        layout_debounce_ms: int = LAYOUT_DEBOUNCE_MS,
    ):
        self.config = config
        self.clock = clock if clock is not None else WallClock()
        self.layout_debounce_ms = layout_debounce_ms

        self.sessions: dict[str, UserSession] = {}
        self.op_log: list[Operation] = []
        self.counters: dict[str, UserCounters] = {}
        self._join_counter = 0
        self._node_counter = 0
        self._link_counter = 0

        self.panel_poses: list[PanelPose] = semicircle_doc_layout(
            [d.id for d in config.documents], config.semicircle_radius
        ) if config.documents else []
        self.anchor_by_document: dict[str, str] = {}

        nodes: dict[str, NodeRecord] = {}
        for doc, pose in zip(config.documents, self.panel_poses):
            node_id = self._next_node_id()
            nodes[node_id] = NodeRecord(
                id=node_id,
                label=doc.title,
                position3=pose.anchor_position(),
                creator="system",
                is_doc_anchor=True,
            )
            self.anchor_by_document[doc.id] = node_id
        self.graph = GraphState(nodes=nodes, links={}, version=0)

        self.layout: LayoutResult = compute_layout(
            self.graph,
            config.layout_params,
            initial={nid: n.position3 for nid, n in nodes.items()},
            fixed=self.anchor_by_document.values(),
        )
        self._layout_dirty = False
        self._layout_due_ms: Optional[int] = None

        self._awareness_pending: dict[str, dict[str, Any]] = {}
        self._awareness_last_flush_ms = -AWARENESS_FLUSH_MS

        self._writer: Optional[OplogWriter] = None
        if log_dir is not None:
            from .persistence import oplog_path

            self._writer = OplogWriter(oplog_path(log_dir, config.room_id), config.to_dict())

    # -- id generation ------------------------------------------------------

    def _next_node_id(self) -> str:
        self._node_counter += 1
        return f"{self.config.room_id}:n{self._node_counter}"

    def _next_link_id(self) -> str:
        self._link_counter += 1
        return f"{self.config.room_id}:l{self._link_counter}"

    def _bump_counters_from(self, *entity_ids: Optional[str]) -> None:
        for eid in entity_ids:
            if not eid:
                continue
            m = re.fullmatch(re.escape(self.config.room_id) + r":([nl])(\d+)", eid)
            if not m:
                continue
            value = int(m.group(2))
            if m.group(1) == "n":
                self._node_counter = max(self._node_counter, value)
            else:
                self._link_counter = max(self._link_counter, value)

    # -- membership ---------------------------------------------------------

    def join(self, name: str, platform: Platform) -> tuple[UserSession, list[Outgoing]]:
        if len(self.sessions) >= MAX_USERS_PER_ROOM:
            raise RoomFullError(f"room {self.config.room_id} is full")
        used_colors = {s.color for s in self.sessions.values()}
        color = next(c for c in COLOR_PALETTE if c not in used_colors)

        warning = None
        taken = {s.name for s in self.sessions.values()}
        final_name = name
        suffix = 2
        while final_name in taken:
            final_name = f"{name}-{suffix}"
            suffix += 1
        if final_name != name:
            warning = f"name '{name}' taken; joined as '{final_name}'"

        self._join_counter += 1
        session = UserSession(
            id=f"u{self._join_counter}", name=final_name, color=color, platform=platform
        )
        self.sessions[session.id] = session
        self.counters.setdefault(session.id, UserCounters())

        out: list[Outgoing] = [
            (
                session.id,
                make_message(
                    "JoinAck",
                    self.config.room_id,
                    {
                        "userId": session.id,
                        "color": list(color),
                        "warning": warning,
                        "snapshot": self.snapshot_body(),
                    },
                ),
            )
        ]
        roster = make_message(
            "Awareness",
            self.config.room_id,
            {
                "changes": [
                    {
                        "user": session.id,
                        "ts": self.clock.now_ms(),
                        "name": session.name,
                        "color": list(session.color),
                        "platform": session.platform.value,
                        "joined": True,
                    }
                ]
            },
        )
        for other in self.sessions:
            if other != session.id:
                out.append((other, roster))
        return session, out

    def leave(self, user_id: str) -> list[Outgoing]:
        if user_id not in self.sessions:
            return []
        del self.sessions[user_id]
        self._awareness_pending.pop(user_id, None)
        msg = make_message("Leave", self.config.room_id, {"user": user_id})
        return [(other, msg) for other in self.sessions]

    # -- operations ---------------------------------------------------------

    def submit_op(
        self,
        user_id: str,
        kind: str,
        payload: dict[str, Any],
        request_id: Optional[str] = None,
    ) -> list[Outgoing]:
        session = self.sessions.get(user_id)
        if session is None:
            return [
                (
                    user_id,
                    self._rejection(RejectReason.NOT_JOINED, "join first", request_id),
                )
            ]
        try:
            op_kind = OpKind(kind)
        except ValueError:
            return [
                (
                    user_id,
                    self._rejection(RejectReason.BAD_PAYLOAD, f"unknown kind {kind!r}", request_id),
                )
            ]

        try:
            op = self._sequence(session, op_kind, dict(payload))
            new_graph = graphmod.apply(self.graph, op)
        except OperationRejected as exc:
            return [(user_id, self._rejection(exc.reason, exc.detail, request_id))]

        delta = graph_delta(self.graph, new_graph)
        self.graph = new_graph
        self.op_log.append(op)
        if self._writer is not None:
            self._writer.append(op)
        self._tally(op)
        layout_delta = self._layout_cheap_update(op, delta)
        self._session_effects(op, delta)
        if op.kind in STRUCTURAL_KINDS:
            self._layout_dirty = True
            self._layout_due_ms = self.clock.now_ms() + self.layout_debounce_ms

        applied = make_message(
            "OpApplied",
            self.config.room_id,
            {
                "op": op.to_dict(),
                "graphDelta": delta,
                "layoutDelta": layout_delta,
                "version": self.graph.version,
                "requestId": request_id,
            },
        )
        return [("*", applied)]

    def _rejection(self, reason: RejectReason, detail: str, request_id: Optional[str]) -> dict:
        return make_message(
            "OpRejected",
            self.config.room_id,
            {"reason": reason.value, "detail": detail, "requestId": request_id},
        )

    def _sequence(self, session: UserSession, kind: OpKind, payload: dict) -> Operation:
        """Fill in server-generated fields; raises OperationRejected for
        validation that needs room context (documents, session platform)."""
        if kind == OpKind.ADD_NODE:
            payload["nodeId"] = self._next_node_id()
            payload.setdefault("position", [0.0, 0.0, 0.0])
            payload.pop("defaultLinkTo", None)
            payload.pop("defaultLinkId", None)
            if session.platform == Platform.SPATIAL3D and session.current_document:
                anchor = self.anchor_by_document.get(session.current_document)
                if anchor is not None:
                    payload["defaultLinkTo"] = anchor
                    payload["defaultLinkId"] = self._next_link_id()
        elif kind == OpKind.ADD_LINK:
            payload["linkId"] = self._next_link_id()
        elif kind == OpKind.SET_CURRENT_DOCUMENT:
            doc_id = payload.get("documentId")
            if doc_id in ("", None):
                payload["documentId"] = None
            elif doc_id not in self.anchor_by_document:
                raise OperationRejected(RejectReason.UNKNOWN_DOCUMENT, str(doc_id))
        return Operation(
            seq=self.graph.version + 1,
            actor=session.id,
            kind=kind,
            payload=payload,
            timestamp_ms=self.clock.now_ms(),
        )

    def _tally(self, op: Operation) -> None:
        c = self.counters.setdefault(op.actor, UserCounters())
        c.ops_by_kind[op.kind.value] = c.ops_by_kind.get(op.kind.value, 0) + 1
        if op.kind == OpKind.SET_CURRENT_DOCUMENT and op.payload.get("documentId"):
            c.document_retrievals += 1
        if op.kind == OpKind.ADD_NODE:
            c.nodes_created += 1
            if op.payload.get("defaultLinkTo"):
                c.links_created += 1
        if op.kind == OpKind.ADD_LINK:
            c.links_created += 1

    def _layout_cheap_update(self, op: Operation, delta: dict) -> dict:
        """Keep the layout map covering the graph at every version; node
        positions from the op are honored as-is, refinement comes later."""
        positions3 = dict(self.layout.positions3)
        positions2 = dict(self.layout.positions2)
        pinned = set(self.layout.pinned)
        changed3: dict[str, list[float]] = {}
        changed2: dict[str, list[float]] = {}
        removed: list[str] = []

        for nd in delta.get("nodesUpserted", ()):
            nid = nd["id"]
            p3 = tuple(nd["position3"])
            if positions3.get(nid) != p3:
                positions3[nid] = p3
                positions2[nid] = (p3[0], p3[1])
                changed3[nid] = list(p3)
                changed2[nid] = [p3[0], p3[1]]
        for nid in delta.get("nodesRemoved", ()):
            positions3.pop(nid, None)
            positions2.pop(nid, None)
            pinned.discard(nid)
            removed.append(nid)

        self.layout = LayoutResult(
            positions3=positions3, positions2=positions2, pinned=frozenset(pinned)
        )
        return {"positions3": changed3, "positions2": changed2, "removed": removed}

    def _session_effects(self, op: Operation, delta: dict) -> None:
        actor = self.sessions.get(op.actor)
        if op.kind == OpKind.SELECT_NODE and actor is not None:
            actor.selected_node = op.payload["nodeId"]
            self._mark_awareness(op.actor, "selectedNode", actor.selected_node)
        elif op.kind == OpKind.DESELECT_NODE and actor is not None:
            actor.selected_node = None
            self._mark_awareness(op.actor, "selectedNode", None)
        elif op.kind == OpKind.SET_CURRENT_DOCUMENT and actor is not None:
            actor.current_document = op.payload.get("documentId")
            self._mark_awareness(op.actor, "currentDocument", actor.current_document)

        removed = set(delta.get("nodesRemoved", ()))
        if not removed:
            return
        for session in self.sessions.values():
            if session.selected_node in removed:
                session.selected_node = None
                self._mark_awareness(session.id, "selectedNode", None)
            if session.cursor and any(n in removed for n, _ in session.cursor.entries):
                session.cursor = None
                self._mark_awareness(session.id, "cursor", None)

    # -- awareness ----------------------------------------------------------

    def publish_awareness(self, user_id: str, fields: dict[str, Any]) -> list[Outgoing]:
        """Store latest-value awareness fields and emit coalesced fan-outs.

        currentDocument changes are sequenced as SetCurrentDocument ops so
        they land in the journal; everything else is transient.
        """
        session = self.sessions.get(user_id)
        if session is None:
            return [(user_id, self._rejection(RejectReason.NOT_JOINED, "join first", None))]
        out: list[Outgoing] = []

        if "currentDocument" in fields:
            doc_id = fields["currentDocument"] or None
            if doc_id != session.current_document and (
                doc_id is None or doc_id in self.anchor_by_document
            ):
                out.extend(
                    self.submit_op(user_id, OpKind.SET_CURRENT_DOCUMENT.value, {"documentId": doc_id})
                )

        if "selectedNode" in fields:
            node_id = fields["selectedNode"] or None
            if node_id is None or node_id in self.graph.nodes:
                if node_id != session.selected_node:
                    session.selected_node = node_id
                    self._mark_awareness(user_id, "selectedNode", node_id)

        if "cursor" in fields:
            raw = fields["cursor"]
            hint = CursorHint.from_dict(raw) if isinstance(raw, dict) else None
            if hint is None:
                if session.cursor is not None:
                    session.cursor = None
                    self._mark_awareness(user_id, "cursor", None)
            elif all(n in self.graph.nodes for n, _ in hint.entries) and (
                session.cursor is None or hint.timestamp_ms >= session.cursor.timestamp_ms
            ):
                session.cursor = hint
                self._mark_awareness(user_id, "cursor", hint.to_dict())

        if "headPose" in fields:
            raw = fields["headPose"]
            pose = HeadPose.from_dict(raw) if isinstance(raw, dict) else None
            session.head_pose = pose
            self._mark_awareness(user_id, "headPose", pose.to_dict() if pose else None)

        out.extend(self.maybe_flush_awareness(self.clock.now_ms()))
        return out

    def _mark_awareness(self, user_id: str, fieldname: str, value: Any) -> None:
        pending = self._awareness_pending.setdefault(user_id, {})
        pending[fieldname] = value
        pending["ts"] = self.clock.now_ms()

    def maybe_flush_awareness(self, now_ms: int) -> list[Outgoing]:
        if not self._awareness_pending:
            return []
        if now_ms - self._awareness_last_flush_ms < AWARENESS_FLUSH_MS:
            return []
        self._awareness_last_flush_ms = now_ms
        changes = []
        for user_id, fields in self._awareness_pending.items():
            change = {"user": user_id}
            change.update(fields)
            changes.append(change)
        self._awareness_pending.clear()
        msg = make_message("Awareness", self.config.room_id, {"changes": changes})
        return [("*", msg)]

    def awareness_due_at(self) -> Optional[int]:
        if not self._awareness_pending:
            return None
        return self._awareness_last_flush_ms + AWARENESS_FLUSH_MS

    # -- layout refinement ----------------------------------------------------

    def layout_due_at(self) -> Optional[int]:
        return self._layout_due_ms if self._layout_dirty else None

    def run_layout_refresh(self, now_ms: Optional[int] = None) -> list[Outgoing]:
        """Run the full force pipeline if a structural change is pending.

        Executed synchronously at its scheduled time, so the result is never
        stale; prior positions seed the simulation and anchors stay put.
        """
        if not self._layout_dirty:
            return []
        if now_ms is not None and self._layout_due_ms is not None and now_ms < self._layout_due_ms:
            return []
        self._layout_dirty = False
        self._layout_due_ms = None
        self.layout = compute_layout(
            self.graph,
            self.config.layout_params,
            initial=self.layout.positions3,
            fixed=self.anchor_by_document.values(),
        )
        return [("*", make_message("StateSnapshot", self.config.room_id, self.snapshot_body()))]

    # -- snapshots ------------------------------------------------------------

    def snapshot_body(self) -> dict[str, Any]:
        return {
            "graph": self.graph.to_dict(),
            "layout": self.layout.to_dict(),
            "documents": [d.to_dict() for d in self.config.documents],
            "panelPoses": [p.to_dict() for p in self.panel_poses],
            "sessions": [s.to_public_dict() for s in self.sessions.values()],
            "version": self.graph.version,
        }

    def state_hash(self) -> str:
        return state_hash(self.graph)

    def reading_status(self) -> dict[str, list[str]]:
        """Document id -> names of users currently reading it (Using column)."""
        table: dict[str, list[str]] = {d.id: [] for d in self.config.documents}
        for session in self.sessions.values():
            if session.current_document:
                table[session.current_document].append(session.name)
        return table

    def write_snapshot(self, log_dir: str | Path) -> Path:
        from .persistence import snapshot_path, write_snapshot_file

        path = snapshot_path(log_dir, self.config.room_id)
        write_snapshot_file(path, self.snapshot_body())
        return path

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()

    # -- replay ---------------------------------------------------------------

    def replay(self, ops: Iterable[Operation]) -> tuple[int, int]:
        """Re-apply journaled operations; returns (applied, rejected)."""
        applied = rejected = 0
        for op in ops:
            try:
                self.graph = graphmod.apply(self.graph, op)
            except OperationRejected:
                rejected += 1
                continue
            self.op_log.append(op)
            self._tally(op)
            self._bump_counters_from(
                op.payload.get("nodeId"),
                op.payload.get("linkId"),
                op.payload.get("defaultLinkId"),
            )
            applied += 1
        self.layout = compute_layout(
            self.graph,
            self.config.layout_params,
            initial={nid: n.position3 for nid, n in self.graph.nodes.items()},
            fixed=self.anchor_by_document.values(),
        )
        return applied, rejected



def load_log(path: str | Path, recover: bool = False):
    """Rebuild a room from its journal.

    Returns (engine, corrupt_line). With recover=False a corrupt line raises;
    with recover=True the state recovered up to the bad line is returned.
    """
    from .persistence import read_oplog

    config_dict, ops, corrupt = read_oplog(path, recover=recover)
    engine = RoomEngine(RoomConfig.from_dict(config_dict))
    engine.replay(ops)
    return engine, corrupt
