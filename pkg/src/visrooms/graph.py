"""Authoritative graph state and operation application.

GraphState is an immutable snapshot; ``apply`` returns a new state or raises
:class:`OperationRejected` leaving the input untouched. Every applied
operation, including selection and document events, advances the version by
exactly one, so ``version == seq`` of the last applied operation.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .model import (
    LinkRecord,
    NodeRecord,
    OpKind,
    Operation,
    OperationRejected,
    RejectReason,
    canonical_json,
    canonical_pair,
)

_ID_NUM = re.compile(r"(\d+)")


def creation_order_key(entity_id: str) -> tuple:
    """Natural-sort key. Server-issued ids embed a monotonic counter, so this
    key reproduces creation order even after a state round-trips through a
    sorted-key serialization."""
    parts = _ID_NUM.split(entity_id)
    return tuple(int(p) if p.isdigit() else p for p in parts)


@dataclass(frozen=True)
class GraphState:
    nodes: dict[str, NodeRecord] = field(default_factory=dict)
    links: dict[str, LinkRecord] = field(default_factory=dict)
    version: int = 0

    # -- queries ----------------------------------------------------------

    def link_between(self, a: str, b: str) -> Optional[LinkRecord]:
        pair = canonical_pair(a, b)
        for link in self.links.values():
            if link.endpoints == pair:
                return link
        return None

    def links_at(self, node_id: str) -> list[LinkRecord]:
        return [l for l in self.links.values() if node_id in l.endpoints]

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": {nid: n.to_dict() for nid, n in sorted(self.nodes.items())},
            "links": {lid: l.to_dict() for lid, l in sorted(self.links.items())},
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GraphState":
        return cls(
            nodes={nid: NodeRecord.from_dict(nd) for nid, nd in d["nodes"].items()},
            links={lid: LinkRecord.from_dict(ld) for lid, ld in d["links"].items()},
            version=int(d["version"]),
        )


def state_hash(state: GraphState) -> str:
    return hashlib.sha256(canonical_json(state.to_dict()).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Operation application
# ---------------------------------------------------------------------------


def _require(condition: bool, reason: RejectReason, detail: str) -> None:
    if not condition:
        raise OperationRejected(reason, detail)


def _payload_str(payload: dict, key: str) -> str:
    value = payload.get(key)
    _require(isinstance(value, str) and value != "", RejectReason.BAD_PAYLOAD, f"missing {key}")
    return value


def _payload_label(payload: dict, key: str = "label") -> str:
    value = payload.get(key)
    _require(isinstance(value, str), RejectReason.BAD_PAYLOAD, f"missing {key}")
    return value


def _payload_position(payload: dict, key: str = "position") -> tuple[float, float, float]:
    raw = payload.get(key)
    _require(
        isinstance(raw, (list, tuple)) and len(raw) == 3,
        RejectReason.BAD_PAYLOAD,
        f"{key} must be a 3-vector",
    )
    try:
        from .model import _finite3

        return _finite3(raw)
    except (TypeError, ValueError) as exc:
        raise OperationRejected(RejectReason.BAD_PAYLOAD, str(exc))


def _existing_node(state: GraphState, node_id: str) -> NodeRecord:
    node = state.nodes.get(node_id)
    _require(node is not None, RejectReason.UNKNOWN_NODE, node_id)
    return node


def apply(state: GraphState, op: Operation) -> GraphState:
    """Apply one operation, returning the successor state.

    Raises OperationRejected on any invalid operation; the input state is
    never modified. Sequencing (gapless seq assignment) is the room's job,
    not checked here.
    """
    kind = op.kind
    payload = op.payload

    if kind == OpKind.ADD_NODE:
        return _add_node(state, op)
    if kind == OpKind.MOVE_NODE:
        node_id = _payload_str(payload, "nodeId")
        node = _existing_node(state, node_id)
        position = _payload_position(payload)
        nodes = dict(state.nodes)
        nodes[node_id] = NodeRecord(
            id=node.id,
            label=node.label,
            position3=position,
            creator=node.creator,
            is_doc_anchor=node.is_doc_anchor,
            pinned_in_2d=node.pinned_in_2d,
        )
        return GraphState(nodes=nodes, links=state.links, version=state.version + 1)
    if kind == OpKind.RENAME_NODE:
        node_id = _payload_str(payload, "nodeId")
        node = _existing_node(state, node_id)
        label = _payload_label(payload)
        nodes = dict(state.nodes)
        nodes[node_id] = NodeRecord(
            id=node.id,
            label=label,
            position3=node.position3,
            creator=node.creator,
            is_doc_anchor=node.is_doc_anchor,
            pinned_in_2d=node.pinned_in_2d,
        )
        return GraphState(nodes=nodes, links=state.links, version=state.version + 1)
    if kind == OpKind.MERGE_NODES:
        return _merge_nodes(state, op)
    if kind == OpKind.DELETE_NODE:
        node_id = _payload_str(payload, "nodeId")
        node = _existing_node(state, node_id)
        _require(not node.is_doc_anchor, RejectReason.ANCHOR_DELETION, node_id)
        nodes = {nid: n for nid, n in state.nodes.items() if nid != node_id}
        links = {lid: l for lid, l in state.links.items() if node_id not in l.endpoints}
        return GraphState(nodes=nodes, links=links, version=state.version + 1)
    if kind == OpKind.ADD_LINK:
        return _add_link(state, op)
    if kind == OpKind.RELABEL_LINK:
        link_id = _payload_str(payload, "linkId")
        link = state.links.get(link_id)
        _require(link is not None, RejectReason.UNKNOWN_LINK, link_id)
        label = _payload_label(payload)
        links = dict(state.links)
        links[link_id] = LinkRecord(
            id=link.id,
            endpoints=link.endpoints,
            label=label,
            creator=link.creator,
            is_default_doc_link=link.is_default_doc_link,
        )
        return GraphState(nodes=state.nodes, links=links, version=state.version + 1)
    if kind == OpKind.DELETE_LINK:
        link_id = _payload_str(payload, "linkId")
        _require(link_id in state.links, RejectReason.UNKNOWN_LINK, link_id)
        links = {lid: l for lid, l in state.links.items() if lid != link_id}
        return GraphState(nodes=state.nodes, links=links, version=state.version + 1)
    if kind == OpKind.SELECT_NODE:
        node_id = _payload_str(payload, "nodeId")
        _existing_node(state, node_id)
        return GraphState(nodes=state.nodes, links=state.links, version=state.version + 1)
    if kind in (OpKind.DESELECT_NODE, OpKind.SET_CURRENT_DOCUMENT):
        # Session-level events; document validation happens in the room,
        # which owns the document list. They still consume a version so that
        # version == count of applied operations.
        return GraphState(nodes=state.nodes, links=state.links, version=state.version + 1)
    raise OperationRejected(RejectReason.BAD_PAYLOAD, f"unknown kind {kind}")


def _add_node(state: GraphState, op: Operation) -> GraphState:
    payload = op.payload
    node_id = _payload_str(payload, "nodeId")
    _require(node_id not in state.nodes, RejectReason.BAD_PAYLOAD, f"id {node_id} taken")
    label = _payload_label(payload)
    position = _payload_position(payload)
    node = NodeRecord(
        id=node_id,
        label=label,
        position3=position,
        creator=op.actor,
        is_doc_anchor=bool(payload.get("isDocAnchor", False)),
    )
    nodes = dict(state.nodes)
    nodes[node_id] = node
    links = state.links

    # Optional default link to the current document's anchor, resolved by the
    # server at sequencing time so replays need no session context.
    anchor_id = payload.get("defaultLinkTo")
    if anchor_id is not None:
        link_id = _payload_str(payload, "defaultLinkId")
        _require(anchor_id in nodes, RejectReason.UNKNOWN_NODE, anchor_id)
        _require(link_id not in state.links, RejectReason.BAD_PAYLOAD, f"id {link_id} taken")
        if _pair_free(links, node_id, anchor_id):
            links = dict(state.links)
            links[link_id] = LinkRecord(
                id=link_id,
                endpoints=(node_id, anchor_id),
                label="",
                creator=op.actor,
                is_default_doc_link=True,
            )
    return GraphState(nodes=nodes, links=links, version=state.version + 1)


def _pair_free(links: dict[str, LinkRecord], a: str, b: str) -> bool:
    pair = canonical_pair(a, b)
    return all(l.endpoints != pair for l in links.values())


def _add_link(state: GraphState, op: Operation) -> GraphState:
    payload = op.payload
    link_id = _payload_str(payload, "linkId")
    _require(link_id not in state.links, RejectReason.BAD_PAYLOAD, f"id {link_id} taken")
    a = _payload_str(payload, "a")
    b = _payload_str(payload, "b")
    _require(a != b, RejectReason.SELF_LINK, a)
    _existing_node(state, a)
    _existing_node(state, b)
    _require(_pair_free(state.links, a, b), RejectReason.DUPLICATE_LINK, f"{a}--{b}")
    label = _payload_label(payload)
    links = dict(state.links)
    links[link_id] = LinkRecord(
        id=link_id, endpoints=(a, b), label=label, creator=op.actor
    )
    return GraphState(nodes=state.nodes, links=links, version=state.version + 1)


def _merge_nodes(state: GraphState, op: Operation) -> GraphState:
    payload = op.payload
    src_id = _payload_str(payload, "srcId")
    dst_id = _payload_str(payload, "dstId")
    _require(src_id != dst_id, RejectReason.SELF_MERGE, src_id)
    src = _existing_node(state, src_id)
    dst = _existing_node(state, dst_id)
    _require(not src.is_doc_anchor, RejectReason.ANCHOR_DELETION, src_id)
    _require(not dst.is_doc_anchor, RejectReason.ANCHOR_DELETION, dst_id)

    midpoint = tuple((s + d) / 2.0 for s, d in zip(src.position3, dst.position3))
    nodes = {nid: n for nid, n in state.nodes.items() if nid != src_id}
    nodes[dst_id] = NodeRecord(
        id=dst.id,
        label=dst.label,
        position3=midpoint,  # type: ignore[arg-type]
        creator=dst.creator,
        is_doc_anchor=False,
        pinned_in_2d=dst.pinned_in_2d,
    )

    # Rehome links incident to src, drop self-loops, and collapse duplicate
    # pairs keeping the earlier-created link (creation order via id counter).
    links: dict[str, LinkRecord] = {}
    seen_pairs: dict[tuple[str, str], str] = {}
    for lid in sorted(state.links, key=creation_order_key):
        link = state.links[lid]
        a, b = link.endpoints
        if a == src_id:
            a = dst_id
        if b == src_id:
            b = dst_id
        if a == b:
            continue
        pair = canonical_pair(a, b)
        if pair in seen_pairs:
            continue
        seen_pairs[pair] = lid
        links[lid] = LinkRecord(
            id=link.id,
            endpoints=pair,
            label=link.label,
            creator=link.creator,
            is_default_doc_link=link.is_default_doc_link,
        )
    # Restore original map ordering for untouched ids (cosmetic only;
    # serialization sorts by key anyway).
    ordered = {lid: links[lid] for lid in state.links if lid in links}
    return GraphState(nodes=nodes, links=ordered, version=state.version + 1)


# ---------------------------------------------------------------------------
# Invariants and deltas
# ---------------------------------------------------------------------------


def check_invariants(state: GraphState) -> None:
    """Raise AssertionError if any structural invariant is violated."""
    import math

    seen_pairs: set[tuple[str, str]] = set()
    for lid, link in state.links.items():
        a, b = link.endpoints
        assert lid == link.id, f"link key {lid} != id {link.id}"
        assert a != b, f"self-loop {lid}"
        assert a in state.nodes and b in state.nodes, f"dangling link {lid}"
        pair = canonical_pair(a, b)
        assert pair not in seen_pairs, f"duplicate pair {pair}"
        seen_pairs.add(pair)
    for nid, node in state.nodes.items():
        assert nid == node.id, f"node key {nid} != id {node.id}"
        assert all(math.isfinite(c) for c in node.position3), f"non-finite pos {nid}"
    assert state.version >= 0


def graph_delta(before: GraphState, after: GraphState) -> dict[str, Any]:
    """Structural diff, sufficient for a replica to advance before -> after."""
    nodes_upserted = [
        n.to_dict()
        for nid, n in sorted(after.nodes.items())
        if before.nodes.get(nid) != n
    ]
    nodes_removed = sorted(nid for nid in before.nodes if nid not in after.nodes)
    links_upserted = [
        l.to_dict()
        for lid, l in sorted(after.links.items())
        if before.links.get(lid) != l
    ]
    links_removed = sorted(lid for lid in before.links if lid not in after.links)
    return {
        "nodesUpserted": nodes_upserted,
        "nodesRemoved": nodes_removed,
        "linksUpserted": links_upserted,
        "linksRemoved": links_removed,
        "version": after.version,
    }


def apply_delta(state: GraphState, delta: dict[str, Any]) -> GraphState:
    nodes = dict(state.nodes)
    links = dict(state.links)
    for nd in delta.get("nodesUpserted", ()):
        node = NodeRecord.from_dict(nd)
        nodes[node.id] = node
    for nid in delta.get("nodesRemoved", ()):
        nodes.pop(nid, None)
    for ld in delta.get("linksUpserted", ()):
        link = LinkRecord.from_dict(ld)
        links[link.id] = link
    for lid in delta.get("linksRemoved", ()):
        links.pop(lid, None)
    return GraphState(nodes=nodes, links=links, version=int(delta["version"]))
