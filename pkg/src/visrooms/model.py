"""Domain types shared across the graph engine, layout, awareness, and wire layers.

Everything that crosses a module or process boundary is defined here, together
with its canonical JSON form. Records that participate in the replicated graph
state are immutable; per-connection session state is mutable and owned by a
single room writer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

PROTOCOL_VERSION = "1"

# Ordered palette; slots are assigned by join order and recycled on leave.
COLOR_PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 25, 75),    # red
    (67, 99, 216),    # blue
    (60, 180, 75),    # green
    (245, 130, 49),   # orange
    (145, 30, 180),   # purple
    (66, 212, 244),   # cyan
    (240, 50, 230),   # magenta
    (154, 99, 36),    # brown
)

MAX_USERS_PER_ROOM = len(COLOR_PALETTE)


class Platform(str, Enum):
    FLAT2D = "flat2d"
    SPATIAL3D = "spatial3d"


class OpKind(str, Enum):
    ADD_NODE = "AddNode"
    MOVE_NODE = "MoveNode"
    RENAME_NODE = "RenameNode"
    MERGE_NODES = "MergeNodes"
    DELETE_NODE = "DeleteNode"
    ADD_LINK = "AddLink"
    RELABEL_LINK = "RelabelLink"
    DELETE_LINK = "DeleteLink"
    SELECT_NODE = "SelectNode"
    DESELECT_NODE = "DeselectNode"
    SET_CURRENT_DOCUMENT = "SetCurrentDocument"


# Kinds whose application changes the node/link structure and therefore
# schedules a layout refinement. MoveNode is deliberately absent: a manual
# placement is honored as-is.
STRUCTURAL_KINDS = frozenset(
    {
        OpKind.ADD_NODE,
        OpKind.DELETE_NODE,
        OpKind.MERGE_NODES,
        OpKind.ADD_LINK,
        OpKind.DELETE_LINK,
    }
)


class RejectReason(str, Enum):
    UNKNOWN_NODE = "UnknownNode"
    UNKNOWN_LINK = "UnknownLink"
    UNKNOWN_DOCUMENT = "UnknownDocument"
    DUPLICATE_LINK = "DuplicateLink"
    SELF_LINK = "SelfLink"
    SELF_MERGE = "SelfMerge"
    ANCHOR_DELETION = "AnchorDeletion"
    BAD_PAYLOAD = "BadPayload"
    NOT_JOINED = "NotJoined"
    ROOM_FULL = "RoomFull"
    SEQ_GAP = "SeqGap"


class OperationRejected(Exception):
    """Raised when an operation cannot be applied; state is left untouched."""

    def __init__(self, reason: RejectReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


def word_count(text: str) -> int:
    """Whitespace-token count; the invariant definition for document sizes."""
    return len(text.split())


def _finite3(p: Iterable[float]) -> tuple[float, float, float]:
    x, y, z = (float(v) for v in p)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise ValueError(f"non-finite position ({x}, {y}, {z})")
    return (x, y, z)


@dataclass(frozen=True)
class NodeRecord:
    id: str
    label: str
    position3: tuple[float, float, float]
    creator: str
    is_doc_anchor: bool = False
    pinned_in_2d: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "label": self.label,
            "position3": list(self.position3),
            "creator": self.creator,
            "isDocAnchor": self.is_doc_anchor,
            "pinnedIn2d": self.pinned_in_2d,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NodeRecord":
        return cls(
            id=d["id"],
            label=d["label"],
            position3=_finite3(d["position3"]),
            creator=d["creator"],
            is_doc_anchor=bool(d.get("isDocAnchor", False)),
            pinned_in_2d=bool(d.get("pinnedIn2d", False)),
        )


def canonical_pair(a: str, b: str) -> tuple[str, str]:
    """Unordered endpoint pair in its canonical (sorted) orientation."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class LinkRecord:
    id: str
    endpoints: tuple[str, str]  # always canonical_pair order
    label: str
    creator: str
    is_default_doc_link: bool = False

    def __post_init__(self):
        object.__setattr__(self, "endpoints", canonical_pair(*self.endpoints))

    def other_end(self, node_id: str) -> str:
        a, b = self.endpoints
        return b if node_id == a else a

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "endpoints": list(self.endpoints),
            "label": self.label,
            "creator": self.creator,
            "isDefaultDocLink": self.is_default_doc_link,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LinkRecord":
        a, b = d["endpoints"]
        return cls(
            id=d["id"],
            endpoints=(a, b),
            label=d["label"],
            creator=d["creator"],
            is_default_doc_link=bool(d.get("isDefaultDocLink", False)),
        )


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    body: str
    word_count: int = field(default=-1)

    def __post_init__(self):
        object.__setattr__(self, "word_count", word_count(self.body))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "body": self.body,
            "wordCount": self.word_count,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Document":
        return cls(id=d["id"], title=d["title"], body=d["body"])


@dataclass(frozen=True)
class CursorHint:
    """Cross-environment cursor encoding: node-relative interpolation weights.

    The receiving side reconstructs a cursor by mixing its own positions for
    the referenced nodes, so no pixel- or meter-space coordinates ever travel
    between environments.
    """

    entries: tuple[tuple[str, float], ...]
    source_platform: Platform
    timestamp_ms: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": [{"node": n, "w": w} for n, w in self.entries],
            "sourcePlatform": self.source_platform.value,
            "ts": self.timestamp_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CursorHint":
        return cls(
            entries=tuple((e["node"], float(e["w"])) for e in d["entries"]),
            source_platform=Platform(d["sourcePlatform"]),
            timestamp_ms=int(d["ts"]),
        )


@dataclass(frozen=True)
class HeadPose:
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]  # quaternion (w, x, y, z)
    fov_vertical: float  # radians
    fov_horizontal: float  # radians

    def to_dict(self) -> dict[str, Any]:
        return {
            "position": list(self.position),
            "orientation": list(self.orientation),
            "fovVertical": self.fov_vertical,
            "fovHorizontal": self.fov_horizontal,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "HeadPose":
        w, x, y, z = (float(v) for v in d["orientation"])
        return cls(
            position=_finite3(d["position"]),
            orientation=(w, x, y, z),
            fov_vertical=float(d["fovVertical"]),
            fov_horizontal=float(d["fovHorizontal"]),
        )


@dataclass
class UserSession:
    """One participant in a room. Mutable; owned by the room's single writer."""

    id: str
    name: str
    color: tuple[int, int, int]
    platform: Platform
    current_document: Optional[str] = None
    selected_node: Optional[str] = None
    cursor: Optional[CursorHint] = None
    head_pose: Optional[HeadPose] = None

    def to_public_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "color": list(self.color),
            "platform": self.platform.value,
            "currentDocument": self.current_document,
            "selectedNode": self.selected_node,
            "cursor": self.cursor.to_dict() if self.cursor else None,
            "headPose": self.head_pose.to_dict() if self.head_pose else None,
        }


@dataclass(frozen=True)
class Operation:
    """A server-sequenced edit or awareness event; the unit of synchronization.

    Only applied operations are sequenced: seq values are gapless and equal to
    the graph version they produce.
    """

    seq: int
    actor: str
    kind: OpKind
    payload: dict[str, Any]
    timestamp_ms: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "actor": self.actor,
            "kind": self.kind.value,
            "payload": self.payload,
            "timestamp": self.timestamp_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Operation":
        return cls(
            seq=int(d["seq"]),
            actor=d["actor"],
            kind=OpKind(d["kind"]),
            payload=dict(d["payload"]),
            timestamp_ms=int(d["timestamp"]),
        )


def canonical_json(obj: Any) -> str:
    """Canonical serialization: sorted keys, no whitespace, UTF-8 text."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
