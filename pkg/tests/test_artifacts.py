"""Tests for artifact writers: proves CSV layout, float formatting,
JSON canonical form and the recorded digests."""

import hashlib
import math
from pathlib import Path

import numpy as np

from oscsteer.persistence.artifacts import (
    ArtifactWriter,
    events_csv,
    fmt_float,
    json_document,
    to_jsonable,
    trajectory_csv,
    trajectory_header,
)
from oscsteer.persistence.event_log import RunEventKind, RunLog
from oscsteer.sim.integrator import EventKind, RunStatus, Sample, Trajectory, TrajectoryEvent
from oscsteer.zones.planner import StageLabel


def _trajectory() -> Trajectory:
    return Trajectory(
        samples=[
            Sample(0.0, (10.0, 0.0), -1.0, StageLabel.HIGH, 15.707963267948966, None),
            Sample(0.1, (0.1, 0.2), 0.25, StageLabel.TERMINAL, None, 0.75),
        ],
        events=[TrajectoryEvent(0.05, EventKind.STAGE_SWITCH, "high->terminal")],
        total_time=0.85,
        status=RunStatus.ARRIVED,
    )


class TestFormatting:
    def test_round_trip_precision(self) -> None:
        assert float(fmt_float(0.1)) == 0.1
        assert fmt_float(0.1) == "0.10000000000000001"

    def test_missing_values_are_empty(self) -> None:
        assert fmt_float(None) == ""
        assert fmt_float(math.nan) == ""

    def test_jsonable(self) -> None:
        doc = to_jsonable({"a": np.array([1.0, 2.0]), "b": np.int64(3), "c": math.inf,
                           "d": StageLabel.MIDDLE, "e": (np.bool_(True),)})
        assert doc == {"a": [1.0, 2.0], "b": 3, "c": None, "d": "middle", "e": [True]}

    def test_json_document_is_sorted(self) -> None:
        text = json_document({"b": 1, "a": 2})
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")


class TestCsv:
    def test_header(self) -> None:
        assert trajectory_header(2) == ["t", "x1", "y1", "x2", "y2", "u", "stage", "rho", "Tfrak"]

    def test_trajectory_rows(self) -> None:
        lines = trajectory_csv(_trajectory(), 1).splitlines()
        assert lines[0] == "t,x1,y1,u,stage,rho,Tfrak"
        assert lines[1] == "0,10,0,-1,high,15.707963267948966,"
        assert lines[2].split(",")[4] == "terminal"
        assert lines[2].endswith(",,0.75")

    def test_events(self) -> None:
        lines = events_csv(_trajectory()).splitlines()
        assert lines == ["t,kind,detail", "0.050000000000000003,stage-switch,high->terminal"]


class TestWriter:
    def test_digest_matches_bytes(self, tmp_path: Path) -> None:
        writer = ArtifactWriter(tmp_path / "out")
        record = writer.write_trajectory("trajectory.csv", _trajectory(), n=1)
        data = (tmp_path / "out" / "trajectory.csv").read_bytes()
        assert record.sha256 == f"sha256:{hashlib.sha256(data).hexdigest()}"
        assert record.size == len(data)

    def test_identical_inputs_identical_bytes(self, tmp_path: Path) -> None:
        a = ArtifactWriter(tmp_path / "a").write_json("s.json", {"x": 1.5})
        b = ArtifactWriter(tmp_path / "b").write_json("s.json", {"x": 1.5})
        assert a.sha256 == b.sha256

    def test_records_into_log(self, tmp_path: Path) -> None:
        log = RunLog()
        writer = ArtifactWriter(tmp_path, log)
        writer.write_events("events.csv", _trajectory())
        writer.write_text("notes.txt", "ok\n")
        assert len(log.events(RunEventKind.ARTIFACT_WRITTEN)) == 2
        assert [m["name"] for m in writer.manifest()] == ["events.csv", "notes.txt"]
