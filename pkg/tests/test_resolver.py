"""Tests for the numerics resolver: proves config loads, validates and fails loud."""

import json
import math
from pathlib import Path

import pytest

from oscsteer.errors import ParseError, ValidationError
from oscsteer.policy.resolver import NumericsResolver


class TestSections:
    def test_simulation_defaults(self, resolver: NumericsResolver) -> None:
        sim = resolver.simulation()
        assert sim.dt == 0.001
        assert sim.dt < sim.eps_sign
        assert 0.0 < sim.arrival_fraction < 1.0
        assert sim.terminal_entry == "ellipsoid"

    def test_quadrature_nodes_keyed_by_int(self, resolver: NumericsResolver) -> None:
        quad = resolver.quadrature()
        assert quad.torus_start_nodes(2) == 2048
        assert quad.torus_start_nodes(3) == 256

    def test_quadrature_nodes_fall_back_to_largest_n(self, resolver: NumericsResolver) -> None:
        assert resolver.quadrature().torus_start_nodes(7) == resolver.quadrature().torus_start_nodes(4)

    def test_every_section_resolves(self, resolver: NumericsResolver) -> None:
        assert resolver.geometry().resonance_max_coeff >= 1
        assert resolver.dual_solver().max_iter > 0
        assert resolver.terminal().max_dim % 2 == 0
        assert resolver.zones().condition_a_directions > 0
        assert resolver.studies().workers >= 1


class TestPresets:
    def test_toy_preset(self, resolver: NumericsResolver) -> None:
        toy = resolver.preset("toy")
        assert toy.omega == (1.0,)
        assert toy.x0 == (10.0, 0.0)
        assert toy.r_switch == 2.0
        assert toy.r_switch_kind == "euclidean"

    def test_unknown_preset(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError):
            resolver.preset("nonexistent")

    def test_general_rule(self, resolver: NumericsResolver) -> None:
        assert resolver.default_r_switch((1.0,)) == pytest.approx(4.0)
        assert resolver.default_r_switch((1.0, 2.0)) == pytest.approx(4.0 * math.sqrt(2.0))
        assert resolver.default_r_switch((2.0, 4.0)) == pytest.approx(math.sqrt(2.0))

    def test_max_oscillators(self, resolver: NumericsResolver) -> None:
        assert resolver.max_oscillators() == 8


class TestOverrides:
    def test_deep_merge(self, resolver: NumericsResolver) -> None:
        merged = resolver.with_overrides({"simulation": {"dt": 5e-4}})
        assert merged.simulation().dt == 5e-4
        assert merged.simulation().eps_sign == resolver.simulation().eps_sign
        assert resolver.simulation().dt == 0.001

    def test_empty_override_returns_same(self, resolver: NumericsResolver) -> None:
        assert resolver.with_overrides({}) is resolver

    def test_unknown_key_rejected(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError) as exc:
            resolver.with_overrides({"simulation": {"dtt": 1.0}})
        assert exc.value.field == "simulation.dtt"

    def test_bad_terminal_entry(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError):
            resolver.with_overrides({"simulation": {"terminal_entry": "sphere"}}).simulation()

    def test_non_positive_dt(self, resolver: NumericsResolver) -> None:
        with pytest.raises(ValidationError):
            resolver.with_overrides({"simulation": {"dt": 0.0}}).simulation()


class TestFailLoud:
    def test_missing_key_names_field(self, resolver: NumericsResolver) -> None:
        snapshot = resolver.snapshot()
        del snapshot["numerics"]["dual_solver"]["armijo"]
        broken = NumericsResolver(snapshot["numerics"], snapshot["presets"])
        with pytest.raises(ValidationError) as exc:
            broken.dual_solver()
        assert exc.value.field == "numerics.dual_solver.armijo"

    def test_missing_version(self, resolver: NumericsResolver) -> None:
        snapshot = resolver.snapshot()
        del snapshot["numerics"]["version"]
        with pytest.raises(ValidationError):
            NumericsResolver(snapshot["numerics"], snapshot["presets"])

    def test_missing_directory(self, tmp_path: Path) -> None:
        with pytest.raises(ParseError):
            NumericsResolver.from_config_dir(tmp_path)

    def test_malformed_json_reports_line(self, tmp_path: Path, config_dir: Path) -> None:
        (tmp_path / "numerics.json").write_text('{\n  "version": "0.1",\n  oops\n}\n', encoding="utf-8")
        (tmp_path / "presets.json").write_text((config_dir / "presets.json").read_text(encoding="utf-8"))
        with pytest.raises(ParseError) as exc:
            NumericsResolver.from_config_dir(tmp_path)
        assert exc.value.line == 3

    def test_snapshot_is_a_copy(self, resolver: NumericsResolver) -> None:
        snapshot = resolver.snapshot()
        snapshot["numerics"]["simulation"]["dt"] = 99.0
        assert resolver.simulation().dt == 0.001
        json.dumps(snapshot)
