"""Append-only run log.

Every run writes one JSONL file of run records. A record is immutable
once written and carries the sha256 of its canonical JSON, so a
reloaded log can be checked line by line against tampering and replay.
Wall-clock timestamps live only here, never in the artifacts.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from oscsteer.errors import InternalMismatch, ParseError


class RunEventKind(str, enum.Enum):
    RUN_STARTED = "run_started"
    CONFIG_RESOLVED = "config_resolved"
    RESONANCE_ADVISORY = "resonance_advisory"
    STAGE_SWITCH = "stage_switch"
    ARRIVAL = "arrival"
    STALL = "stall"
    MONITOR_VIOLATION = "monitor_violation"
    ARTIFACT_WRITTEN = "artifact_written"
    RUN_FINISHED = "run_finished"


def _canonical(event_id: str, kind: str, timestamp_utc: str, source: str, payload: dict[str, Any]) -> bytes:
    return json.dumps(
        {
            "event_id": event_id,
            "event_kind": kind,
            "timestamp_utc": timestamp_utc,
            "source": source,
            "payload": payload,
        },
        sort_keys=True,
        ensure_ascii=False,
    ).encode("utf-8")


@dataclass(frozen=True)
class RunEvent:
    """One record of the run log; event_hash covers every other field."""
    event_id: str
    event_kind: RunEventKind
    timestamp_utc: str
    source: str
    payload: dict[str, Any]
    event_hash: str

    @staticmethod
    def create(
        event_id: str,
        event_kind: RunEventKind,
        source: str,
        payload: dict[str, Any],
        timestamp_utc: Optional[datetime] = None,
    ) -> RunEvent:
        ts = (timestamp_utc or datetime.now(timezone.utc)).strftime("%Y-%m-%dT%H:%M:%SZ")
        digest = hashlib.sha256(_canonical(event_id, event_kind.value, ts, source, payload)).hexdigest()
        return RunEvent(event_id, event_kind, ts, source, payload, f"sha256:{digest}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "event_kind": self.event_kind.value,
            "timestamp_utc": self.timestamp_utc,
            "source": self.source,
            "payload": self.payload,
            "event_hash": self.event_hash,
        }


class RunLog:
    """Append-only run log with optional JSONL persistence.

    Usage:
        log = RunLog(out_dir / "events.jsonl")
        log.record(RunEventKind.RUN_STARTED, "cli", {"command": "toy"})
    """

    def __init__(self, storage_path: Optional[Path] = None) -> None:
        self._events: list[RunEvent] = []
        self._event_ids: set[str] = set()
        self._storage_path = storage_path
        if storage_path is not None and storage_path.exists():
            self._load_from_file(storage_path)

    def append(self, event: RunEvent) -> None:
        """Append a record; a repeated event_id is rejected."""
        if event.event_id in self._event_ids:
            raise InternalMismatch(f"duplicate event id: {event.event_id}")
        self._events.append(event)
        self._event_ids.add(event.event_id)
        if self._storage_path is not None:
            self._storage_path.parent.mkdir(parents=True, exist_ok=True)
            with self._storage_path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(event.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")

    def record(self, kind: RunEventKind, source: str, payload: dict[str, Any]) -> RunEvent:
        """Create and append a record with the next sequential id."""
        event = RunEvent.create(f"evt-{len(self._events) + 1:06d}", kind, source, payload)
        self.append(event)
        return event

    def events(self, kind: Optional[RunEventKind] = None) -> list[RunEvent]:
        if kind is None:
            return list(self._events)
        return [e for e in self._events if e.event_kind == kind]

    @property
    def count(self) -> int:
        return len(self._events)

    @property
    def last_event(self) -> Optional[RunEvent]:
        return self._events[-1] if self._events else None

    def _load_from_file(self, path: Path) -> None:
        """Reload with hash verification; fails closed on any mismatch."""
        with path.open("r", encoding="utf-8") as f:
            for line_num, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(str(path), exc.msg, line=line_num) from exc
                event_id = data["event_id"]
                if event_id in self._event_ids:
                    raise ParseError(str(path), f"duplicate event id {event_id}", line=line_num)
                canonical = _canonical(
                    event_id, data["event_kind"], data["timestamp_utc"], data["source"], data["payload"]
                )
                expected = f"sha256:{hashlib.sha256(canonical).hexdigest()}"
                if data["event_hash"] != expected:
                    raise ParseError(
                        str(path),
                        f"integrity check failed for {event_id}: stored {data['event_hash']} != computed {expected}",
                        line=line_num,
                    )
                self._events.append(RunEvent(
                    event_id=event_id,
                    event_kind=RunEventKind(data["event_kind"]),
                    timestamp_utc=data["timestamp_utc"],
                    source=data["source"],
                    payload=data["payload"],
                    event_hash=data["event_hash"],
                ))
                self._event_ids.add(event_id)
