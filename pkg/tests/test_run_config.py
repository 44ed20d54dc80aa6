"""Tests for run configs: proves parsing, dotted overrides, toy defaults
and fail-loud validation."""

import json
from pathlib import Path

import pytest

from oscsteer.errors import ParseError, ValidationError
from oscsteer.models.run import (
    Command,
    RunConfig,
    RunSummary,
    apply_overrides,
    build_system,
    load_config_file,
    parse_config,
    parse_override,
)
from oscsteer.policy.resolver import NumericsResolver
from tests.conftest import CONFIG_DIR


class TestRunConfig:
    def test_round_trip(self) -> None:
        data = {
            "command": "simulate",
            "frequencies": [1.0, "sqrt(2)"],
            "x0": [3.0, 0.0, -1.0, 0.5],
            "plan": {"r_switch": 2.5, "terminal_entry": "time_scale"},
            "numerics": {"simulation": {"dt": 0.0005}},
            "study": {"levels": [1.0, 2.0], "quick": True},
            "output_dir": "runs/x",
            "seed": 7,
        }
        assert RunConfig.from_dict(data).to_dict() == data

    def test_unknown_key(self) -> None:
        with pytest.raises(ValidationError) as info:
            RunConfig.from_dict({"command": "toy", "colour": "blue"})
        assert info.value.field == "colour"

    def test_unknown_nested_key(self) -> None:
        with pytest.raises(ValidationError) as info:
            RunConfig.from_dict({"command": "toy", "plan": {"radius": 1.0}})
        assert info.value.field == "plan.radius"

    def test_bad_command(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig.from_dict({"command": "fly"})
        with pytest.raises(ValidationError):
            RunConfig.from_dict({})

    @pytest.mark.parametrize("data", [
        {"command": "toy", "x0": [1.0, "a"]},
        {"command": "toy", "x0": [float("nan"), 0.0]},
        {"command": "toy", "seed": 1.5},
        {"command": "toy", "frequencies": []},
        {"command": "toy", "study": {"quick": "yes"}},
        {"command": "toy", "seed": True},
    ])
    def test_field_types(self, data: dict) -> None:
        with pytest.raises(ValidationError):
            RunConfig.from_dict(data)

    def test_commands_needing_a_system(self) -> None:
        assert Command.SIMULATE.needs_system
        assert not Command.TABLES.needs_system
        assert not Command.VERIFY.needs_system


class TestOverrides:
    def test_json_value(self) -> None:
        assert parse_override("numerics.simulation.dt=5e-4") == (["numerics", "simulation", "dt"], 5e-4)
        assert parse_override("frequencies=[1, 2]") == (["frequencies"], [1, 2])

    def test_plain_string_value(self) -> None:
        assert parse_override("plan.terminal_entry=time_scale") == (["plan", "terminal_entry"], "time_scale")

    def test_malformed(self) -> None:
        with pytest.raises(ValidationError):
            parse_override("seed")
        with pytest.raises(ValidationError):
            parse_override("=3")

    def test_nested_creation(self) -> None:
        out = apply_overrides({"command": "toy"}, ["plan.r_switch=3", "seed=4"])
        assert out == {"command": "toy", "plan": {"r_switch": 3}, "seed": 4}

    def test_cannot_descend_into_scalar(self) -> None:
        with pytest.raises(ValidationError):
            apply_overrides({"seed": 1}, ["seed.x=2"])

    def test_source_untouched(self) -> None:
        source = {"plan": {"r_switch": 1.0}}
        apply_overrides(source, ["plan.r_switch=2.0"])
        assert source == {"plan": {"r_switch": 1.0}}


class TestFiles:
    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ParseError):
            load_config_file(tmp_path / "absent.json")

    def test_bad_json_reports_line(self, tmp_path: Path) -> None:
        path = tmp_path / "run.json"
        path.write_text('{\n  "command": "toy",\n  oops\n}\n', encoding="utf-8")
        with pytest.raises(ParseError) as info:
            load_config_file(path)
        assert info.value.line == 3

    def test_top_level_must_be_object(self, tmp_path: Path) -> None:
        path = tmp_path / "run.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ParseError):
            load_config_file(path)

    @pytest.mark.parametrize("path", sorted((CONFIG_DIR / "scenarios").glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_scenarios_parse(self, resolver: NumericsResolver, path: Path) -> None:
        config = parse_config(path, resolver)
        assert config.command.value == json.loads(path.read_text())["command"]
        assert config.frequencies is not None


class TestParseConfig:
    def test_toy_defaults(self, resolver: NumericsResolver) -> None:
        config = parse_config(None, resolver, command="toy")
        assert config.frequencies == (1.0,)
        assert config.x0 == (10.0, 0.0)
        assert config.plan.r_switch == 2.0
        assert config.plan.r_switch_kind == "euclidean"
        assert config.resonance["resonant"] is False

    def test_toy_keeps_explicit_start(self, resolver: NumericsResolver) -> None:
        config = parse_config({"x0": [4.0, 0.0]}, resolver, command="toy")
        assert config.x0 == (4.0, 0.0)

    def test_resonance_advisory(self, resolver: NumericsResolver) -> None:
        config = parse_config({"frequencies": [1, 2], "x0": [1, 0, 0, 0]}, resolver, command="simulate")
        assert config.resonance["resonant"] is True
        assert config.resonance["witness"] == [2, -1]

    def test_duplicate_frequencies(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError) as info:
            parse_config({"frequencies": [1, 1]}, resolver, command="ratio-study")
        assert info.value.field == "frequencies"

    def test_nonpositive_frequency(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError):
            parse_config({"frequencies": [1, -2]}, resolver, command="ratio-study")

    def test_x0_length(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError) as info:
            parse_config({"frequencies": [1, 2], "x0": [1.0, 0.0]}, resolver, command="simulate")
        assert info.value.field == "x0"

    def test_study_needs_frequencies(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError):
            parse_config(None, resolver, command="ratio-study")

    def test_oscillator_cap(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError):
            parse_config({"frequencies": list(range(1, 10))}, resolver, command="decay-study")

    def test_tables_skip_the_system(self, resolver: NumericsResolver) -> None:
        config = parse_config(None, resolver, ["study.dim=6"], command="tables")
        assert config.study.dim == 6
        assert config.resonance is None

    def test_unknown_numerics_override(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError):
            parse_config(None, resolver, ["numerics.simulation.bogus=1"], command="toy")

    def test_duplicate_reported_as_field_error(self) -> None:
        with pytest.raises(ValidationError):
            build_system([2, 2.0])


class TestRunSummary:
    def test_exit_codes(self) -> None:
        ok = RunSummary(command="toy", success=True, config={})
        assert ok.exit_code == 0
        assert RunSummary(command="toy", success=False, config={}).exit_code == 1
        assert RunSummary(command="toy", success=True, config={}, hard_violations=2).exit_code == 1
        assert ok.to_dict()["exit_code"] == 0
