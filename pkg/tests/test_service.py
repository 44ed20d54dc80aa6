"""Tests for the steering service: proves command dispatch, run logs,
artifacts and error reporting."""

import json
from pathlib import Path

import pytest

from oscsteer.errors import ValidationError
from oscsteer.models.run import parse_config
from oscsteer.persistence.event_log import RunEventKind, RunLog
from oscsteer.policy.resolver import NumericsResolver
from oscsteer.service import SteeringService, exact_tables, format_tables

FAST = ["numerics.simulation.dt=0.005"]


@pytest.fixture
def service(resolver: NumericsResolver) -> SteeringService:
    return SteeringService(resolver)


class TestExactTables:
    def test_dim_two(self) -> None:
        doc = exact_tables(2, 16)
        assert doc["Q"] == [[6, -12], [-12, 36]]
        assert doc["q"] == [["1/2", "1/6"], ["1/6", "1/12"]]
        assert doc["C_frak"] == ["-3", "6"]
        assert doc["kappa_squared"] == "1/6"
        assert doc["Q11"] == 6
        assert doc["certificate"]["passed"] is True

    def test_dim_four_corner(self) -> None:
        doc = exact_tables(4, 16)
        assert doc["Q11"] == 20
        assert doc["Q"][3][3] == 9800

    def test_dimension_bounds(self) -> None:
        with pytest.raises(ValidationError):
            exact_tables(0, 16)
        with pytest.raises(ValidationError):
            exact_tables(18, 16)

    def test_formatting(self) -> None:
        lines = format_tables(exact_tables(2, 16))
        assert lines[0] == "dim = 2"
        assert "kappa^2 = 1/6" in lines


class TestSetup:
    def test_general_preset_radius(self, service: SteeringService, resolver: NumericsResolver) -> None:
        config = parse_config({"frequencies": [1, 2], "x0": [1, 0, 0, 0]}, resolver, command="simulate")
        setup = service.setup(config)
        assert setup.plan.r_switch == pytest.approx(4.0 * 2 ** 0.5)
        assert setup.system.n == 2
        assert 0.0 < setup.plan.U <= 1.0

    def test_plan_overrides(self, service: SteeringService, resolver: NumericsResolver) -> None:
        config = parse_config(None, resolver, ["plan.amplitude=0.1", "plan.terminal_entry=time_scale"],
                              command="toy")
        setup = service.setup(config)
        assert setup.plan.U == 0.1
        assert setup.plan.terminal_entry.value == "time_scale"


class TestRun:
    def test_tables_with_artifacts(self, service: SteeringService, resolver: NumericsResolver,
                                   tmp_path: Path) -> None:
        config = parse_config(None, resolver, [f"output_dir={json.dumps(str(tmp_path))}", "study.dim=2"],
                              command="tables")
        summary = service.run(config)
        assert summary.exit_code == 0
        assert summary.metrics["tables"]["Q11"] == 6
        assert (tmp_path / "tables.json").exists()
        written = json.loads((tmp_path / "summary.json").read_text())
        assert written["success"] is True
        log = RunLog(tmp_path / "events.jsonl")
        kinds = [e.event_kind for e in log.events()]
        assert kinds[0] is RunEventKind.RUN_STARTED
        assert kinds[-1] is RunEventKind.RUN_FINISHED
        assert RunEventKind.ARTIFACT_WRITTEN in kinds

    def test_toy_run(self, service: SteeringService, resolver: NumericsResolver, tmp_path: Path) -> None:
        config = parse_config(None, resolver, FAST + [f"output_dir={json.dumps(str(tmp_path))}"], command="toy")
        summary = service.run(config)
        assert summary.success, summary.errors
        assert summary.exit_code == 0
        toy = summary.metrics["toy"]
        assert toy["theta_fourth_power"] == pytest.approx(3.0)
        assert toy["U"] == pytest.approx(toy["lambda_in"] / 2)
        assert summary.metrics["trajectory"]["status"] == "arrived"
        assert summary.metrics["trajectory"]["invariant_errors"] == []
        header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,x1,y1,u,stage,rho,Tfrak"
        names = {a["name"] for a in summary.artifacts}
        assert {"trajectory.csv", "events.csv"} <= names

    def test_toy_artifacts_are_reproducible(self, service: SteeringService, resolver: NumericsResolver,
                                            tmp_path: Path) -> None:
        digests = []
        for name in ("a", "b"):
            out = json.dumps(str(tmp_path / name))
            config = parse_config({"x0": [1.5, 0.0]}, resolver, FAST + [f"output_dir={out}"], command="toy")
            summary = service.run(config)
            digests.append({a["name"]: a["sha256"] for a in summary.artifacts})
        assert digests[0] == digests[1]

    def test_horizon_is_reported(self, service: SteeringService, resolver: NumericsResolver) -> None:
        config = parse_config(
            {"frequencies": [1, 2], "x0": [1.0, 0.0, 0.5, 0.0]}, resolver,
            ["numerics.simulation.dt=0.01", "numerics.simulation.t_max=0.05"], command="simulate",
        )
        summary = service.run(config)
        assert not summary.success
        assert summary.exit_code == 1
        assert any(e.startswith("HorizonExceeded") for e in summary.errors)
        assert summary.metrics["trajectory"]["status"] == "horizon"

    def test_resonance_is_logged(self, service: SteeringService, resolver: NumericsResolver,
                                 tmp_path: Path) -> None:
        config = parse_config(
            {"frequencies": [1, 2], "x0": [1.0, 0.0, 0.5, 0.0]}, resolver,
            ["numerics.simulation.dt=0.01", "numerics.simulation.t_max=0.02",
             f"output_dir={json.dumps(str(tmp_path))}"], command="simulate",
        )
        service.run(config)
        log = RunLog(tmp_path / "events.jsonl")
        assert len(log.events(RunEventKind.RESONANCE_ADVISORY)) == 1

    def test_missing_start_fails_cleanly(self, service: SteeringService, resolver: NumericsResolver) -> None:
        config = parse_config({"frequencies": [1, 2]}, resolver, command="simulate")
        summary = service.run(config)
        assert not summary.success
        assert any("x0" in e for e in summary.errors)

    def test_study_needs_levels(self, service: SteeringService, resolver: NumericsResolver) -> None:
        config = parse_config({"frequencies": [1]}, resolver, command="ratio-study")
        summary = service.run(config)
        assert not summary.success
        assert any("study.levels" in e for e in summary.errors)

    def test_ratio_study(self, service: SteeringService, resolver: NumericsResolver) -> None:
        config = parse_config({"frequencies": [1], "study": {"levels": [1.0], "samples": 1, "workers": 1}},
                              resolver, FAST, command="ratio-study")
        summary = service.run(config)
        assert summary.success, summary.errors
        row = summary.metrics["ratio"]["levels"][0]
        assert row["arrived"] == 1
        assert 0.0 < row["tau_over_T"]["mean"] <= 1.05
