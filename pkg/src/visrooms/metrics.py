"""Interaction-log metrics: per-user operation counts, document retrievals,
and per-minute activity timelines, computed either live by the room engine or
independently from a persisted journal. Both paths must agree exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .model import OpKind, Operation

OP_KIND_ORDER = tuple(k.value for k in OpKind)


@dataclass
class UserMetrics:
    op_counts_by_kind: dict[str, int] = field(default_factory=dict)
    document_retrievals: int = 0
    nodes_created: int = 0
    links_created: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "opCountsByKind": {k: self.op_counts_by_kind[k] for k in sorted(self.op_counts_by_kind)},
            "documentRetrievals": self.document_retrievals,
            "nodesCreated": self.nodes_created,
            "linksCreated": self.links_created,
        }


@dataclass
class MetricsReport:
    per_user: dict[str, UserMetrics]
    timeline_buckets: dict[str, dict[int, int]]  # user -> minute index -> ops
    converged: Optional[bool] = None
    time_to_quiescence_ms: Optional[int] = None
    names: dict[str, str] = field(default_factory=dict)

    def total_ops(self) -> int:
        return sum(sum(u.op_counts_by_kind.values()) for u in self.per_user.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "perUser": {u: m.to_dict() for u, m in sorted(self.per_user.items())},
            "timelineBuckets": {
                u: {str(minute): n for minute, n in sorted(buckets.items())}
                for u, buckets in sorted(self.timeline_buckets.items())
            },
            "convergence": {
                "converged": self.converged,
                "timeToQuiescenceMs": self.time_to_quiescence_ms,
            },
            "names": {u: n for u, n in sorted(self.names.items())},
            "totalOps": self.total_ops(),
        }


def _tally_ops(ops: list[Operation]) -> tuple[dict[str, UserMetrics], dict[str, dict[int, int]]]:
    per_user: dict[str, UserMetrics] = {}
    timeline: dict[str, dict[int, int]] = {}
    for op in ops:
        m = per_user.setdefault(op.actor, UserMetrics())
        m.op_counts_by_kind[op.kind.value] = m.op_counts_by_kind.get(op.kind.value, 0) + 1
        if op.kind == OpKind.SET_CURRENT_DOCUMENT and op.payload.get("documentId"):
            m.document_retrievals += 1
        if op.kind == OpKind.ADD_NODE:
            m.nodes_created += 1
            if op.payload.get("defaultLinkTo"):
                m.links_created += 1
        if op.kind == OpKind.ADD_LINK:
            m.links_created += 1
        buckets = timeline.setdefault(op.actor, {})
        minute = op.timestamp_ms // 60000
        buckets[minute] = buckets.get(minute, 0) + 1
    return per_user, timeline


def report_from_engine(
    engine,
    converged: Optional[bool] = None,
    time_to_quiescence_ms: Optional[int] = None,
    names: Optional[dict[str, str]] = None,
) -> MetricsReport:
    """Build a report from a live room's journal (its applied-op log)."""
    per_user, timeline = _tally_ops(engine.op_log)
    return MetricsReport(
        per_user=per_user,
        timeline_buckets=timeline,
        converged=converged,
        time_to_quiescence_ms=time_to_quiescence_ms,
        names=names or {},
    )


def analyze_log(oplog_path: str | Path) -> MetricsReport:
    """Independent counting pass over a persisted journal file."""
    from .persistence import read_oplog

    _, ops, _ = read_oplog(oplog_path)
    per_user, timeline = _tally_ops(ops)
    return MetricsReport(per_user=per_user, timeline_buckets=timeline)


def export_report(report: MetricsReport, fmt: str, path: Optional[str | Path] = None) -> str:
    """Serialize a report as json or csv; optionally write it to a file.

    CSV columns are (user, opKind, count), one row per user and op kind with
    a nonzero count, in stable (user, kind-declaration) order.
    """
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user", "opKind", "count"])
        for user in sorted(report.per_user):
            counts = report.per_user[user].op_counts_by_kind
            for kind in OP_KIND_ORDER:
                if counts.get(kind, 0):
                    writer.writerow([user, kind, counts[kind]])
        text = buf.getvalue()
    else:
        raise ValueError(f"unsupported format {fmt!r} (expected json or csv)")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_csv_report(text: str) -> dict[str, dict[str, int]]:
    """Re-parse an exported CSV back into {user: {opKind: count}}."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["user", "opKind", "count"]:
        raise ValueError(f"unexpected CSV header: {header}")
    out: dict[str, dict[str, int]] = {}
    for user, kind, count in reader:
        out.setdefault(user, {})[kind] = int(count)
    return out
