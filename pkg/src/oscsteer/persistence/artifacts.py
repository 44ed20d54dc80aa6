"""Artifact writers: trajectory and event CSVs, sorted-key JSON documents.

Artifacts hold no wall-clock data, so an identical config and seed give
byte-identical files. Each write returns the sha256 of the bytes on
disk and, when a run log is attached, records it there.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from oscsteer.persistence.event_log import RunEventKind, RunLog
from oscsteer.sim.integrator import Trajectory

FLOAT_FORMAT = "%.17g"


def fmt_float(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return FLOAT_FORMAT % value


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        return f if math.isfinite(f) else None
    return value


def trajectory_header(n: int) -> list[str]:
    cols = ["t"]
    for i in range(1, n + 1):
        cols += [f"x{i}", f"y{i}"]
    return cols + ["u", "stage", "rho", "Tfrak"]


def trajectory_csv(traj: Trajectory, n: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trajectory_header(n))
    for s in traj.samples:
        writer.writerow(
            [fmt_float(s.t)]
            + [fmt_float(v) for v in s.x]
            + [fmt_float(s.u), s.stage.value, fmt_float(s.rho), fmt_float(s.tfrak)]
        )
    return buf.getvalue()


def events_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "kind", "detail"])
    for e in traj.events:
        writer.writerow([fmt_float(e.t), e.kind.value, e.detail])
    return buf.getvalue()


def json_document(doc: Any) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


@dataclass(frozen=True)
class ArtifactRecord:
    name: str
    path: str
    sha256: str
    size: int

    def to_dict(self) -> dict:
        return {"name": self.name, "path": self.path, "sha256": self.sha256, "bytes": self.size}


class ArtifactWriter:
    """Writes artifacts under one output directory and keeps their digests.

    Usage:
        writer = ArtifactWriter(Path("runs/toy"), log)
        writer.write_trajectory("trajectory.csv", traj, n=1)
        writer.manifest()
    """

    def __init__(self, out_dir: Path, log: Optional[RunLog] = None) -> None:
        self._out_dir = out_dir
        self._log = log
        self._records: list[ArtifactRecord] = []

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    def write_text(self, name: str, text: str) -> ArtifactRecord:
        self._out_dir.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path = self._out_dir / name
        path.write_bytes(data)
        record = ArtifactRecord(name, str(path), f"sha256:{hashlib.sha256(data).hexdigest()}", len(data))
        self._records.append(record)
        if self._log is not None:
            self._log.record(RunEventKind.ARTIFACT_WRITTEN, "artifacts", record.to_dict())
        return record

    def write_trajectory(self, name: str, traj: Trajectory, n: int) -> ArtifactRecord:
        return self.write_text(name, trajectory_csv(traj, n))

    def write_events(self, name: str, traj: Trajectory) -> ArtifactRecord:
        return self.write_text(name, events_csv(traj))

    def write_json(self, name: str, doc: Any) -> ArtifactRecord:
        return self.write_text(name, json_document(doc))

    def manifest(self) -> list[dict]:
        return [r.to_dict() for r in self._records]
