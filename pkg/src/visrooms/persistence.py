"""Append-only operation log and snapshot files.

A room's journal is ``<roomId>.oplog.ndjson``: one header line holding the
room configuration, then one canonical-JSON operation per line, flushed after
every applied operation so a crash loses at most the line being written.
Replaying the journal from the initial room state reproduces the exact final
graph state.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Optional

from .model import Operation, canonical_json


class CorruptLogError(Exception):
    def __init__(self, path: str, line_no: int, detail: str):
        super().__init__(f"{path}:{line_no}: {detail}")
        self.path = path
        self.line_no = line_no
        self.detail = detail


class SeqGapError(Exception):
    def __init__(self, path: str, line_no: int, expected: int, found: int):
        super().__init__(f"{path}:{line_no}: expected seq {expected}, found {found}")
        self.path = path
        self.line_no = line_no
        self.expected = expected
        self.found = found


def oplog_path(log_dir: str | Path, room_id: str) -> Path:
    return Path(log_dir) / f"{room_id}.oplog.ndjson"


def snapshot_path(log_dir: str | Path, room_id: str) -> Path:
    return Path(log_dir) / f"{room_id}.snapshot.json"


class OplogWriter:
    """Write-through journal: header on creation, one line per applied op."""

    def __init__(self, path: str | Path, room_config: dict[str, Any], fsync: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fsync = fsync
        self._fh = open(self.path, "w", encoding="utf-8")
        self._fh.write(canonical_json({"roomConfig": room_config}) + "\n")
        self._fh.flush()

    def append(self, op: Operation) -> None:
        self._fh.write(canonical_json(op.to_dict()) + "\n")
        self._fh.flush()
        if self._fsync:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "OplogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_oplog(
    path: str | Path, recover: bool = False
) -> tuple[dict[str, Any], list[Operation], Optional[int]]:
    """Parse a journal into (room config, operations, corrupt line or None).

    With ``recover=False`` a malformed line raises CorruptLogError; with
    ``recover=True`` parsing stops there and everything before it is
    returned. Sequence numbers must be gapless starting at 1.
    """
    path = Path(path)
    ops: list[Operation] = []
    corrupt: Optional[int] = None
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CorruptLogError(str(path), 1, "empty log (missing header)")

    try:
        header = json.loads(lines[0])
        config = header["roomConfig"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptLogError(str(path), 1, f"bad header: {exc}")

    for i, line in enumerate(lines[1:], start=2):
        try:
            op = Operation.from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if recover:
                corrupt = i
                break
            raise CorruptLogError(str(path), i, str(exc))
        expected = len(ops) + 1
        if op.seq != expected:
            raise SeqGapError(str(path), i, expected, op.seq)
        ops.append(op)
    return config, ops, corrupt


def write_snapshot_file(path: str | Path, snapshot: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(canonical_json(snapshot) + "\n", encoding="utf-8")
    tmp.replace(path)


def read_snapshot_file(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
