"""Tests for the batch studies: proves the ratio table, the decay rate,
the attractor scan, singular control and the refinement verdict."""

import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest

from oscsteer.errors import HorizonExceeded, NumericalBlowup, ValidationError
from oscsteer.models.system import OscillatorSystem
from oscsteer.policy.resolver import NumericsResolver, SimulationPolicy
from oscsteer.sim.integrator import Scenario, Simulator
from oscsteer.sim.studies import (
    attractor_scan,
    cauchy_check,
    convergence_study,
    decay_rate_study,
    random_directions,
    ratio_study,
    scale_to_level,
    singular_control,
)
from oscsteer.zones.planner import ZonePlan, build_plan
from tests.conftest import CONFIG_DIR

TOY = OscillatorSystem.from_values([1])


@pytest.fixture(scope="module")
def toy_parts() -> tuple[Simulator, ZonePlan, SimulationPolicy]:
    resolver = NumericsResolver.from_config_dir(CONFIG_DIR)
    sim = Simulator.from_resolver(TOY, resolver)
    plan = build_plan(TOY, sim.transform, sim.controller, resolver.zones(), 2.0)
    settings = dataclasses.replace(resolver.simulation(), dt=0.005)
    return sim, plan, settings


class TestHelpers:
    def test_unit_directions(self) -> None:
        dirs = random_directions(4, 10, np.random.default_rng(0))
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)

    def test_scale_to_level(self, toy_parts) -> None:
        sim = toy_parts[0]
        x = scale_to_level(sim, np.array([0.6, 0.8]), 7.0)
        assert sim.engine.rho_norm(x) == pytest.approx(7.0)


class TestRatioStudy:
    def test_toy_table(self, toy_parts) -> None:
        sim, plan, settings = toy_parts
        table = ratio_study(sim, plan, settings, levels=[2.0, 0.0], samples_per_radius=2, seed=1)
        assert len(table.rows) == 1
        row = table.rows[0]
        assert row["samples"] == 2
        assert row["arrived"] == 2
        assert row["tau_over_T"]["max"] <= 1.0 + 1e-9
        assert row["rho_over_T"]["min"] > 0.0
        assert any("skipped" in note for note in table.notes)

    def test_serial_equals_parallel(self, toy_parts) -> None:
        sim, plan, settings = toy_parts
        serial = ratio_study(sim, plan, settings, levels=[1.0], samples_per_radius=2, seed=5, workers=1)
        parallel = ratio_study(sim, plan, settings, levels=[1.0], samples_per_radius=2, seed=5, workers=2)
        assert serial.to_dict() == parallel.to_dict()


class TestDecayStudy:
    def test_toy_rate_near_one(self, toy_parts) -> None:
        sim, _, settings = toy_parts
        result = decay_rate_study(sim, settings, rho_start=40.0, rho_stop=10.0, samples=2, seed=2)
        assert result["reached"] == 2
        assert result["rate"]["mean"] == pytest.approx(1.0, abs=0.1)
        assert result["fraction_in_band"] == 1.0


class TestAttractorScan:
    def test_empty_when_no_budget(self, toy_parts) -> None:
        sim, _, settings = toy_parts
        assert attractor_scan(sim, settings, 3.0, 0, 10.0, 1e-3, seed=0).runs == []
        report = attractor_scan(sim, settings, 3.0, 2, 0.0, 1e-3, seed=0)
        assert report.stalls == 0
        assert report.attractor_free_radius is None

    def test_runs_are_recorded(self, toy_parts) -> None:
        sim, _, settings = toy_parts
        report = attractor_scan(sim, settings, 3.0, 2, 30.0, 1e-3, seed=4)
        assert len(report.runs) == 2
        assert report.stalls + report.inconclusive == 2
        doc = report.to_dict()
        assert doc["n_inits"] == 2
        assert doc["rho_level"] == 3.0


class TestSingularControl:
    def test_finite_on_toy(self, toy_parts) -> None:
        sim = toy_parts[0]
        assert math.isfinite(singular_control(sim, np.array([2.0, 0.5]), 1e-4))

    def test_flat_direction_raises(self) -> None:
        engine = SimpleNamespace(
            system=TOY,
            rho_norm=lambda x: 1.0,
            rho_gradient=lambda phi: np.array([1.0, 0.0]),
        )
        with pytest.raises(NumericalBlowup):
            singular_control(SimpleNamespace(engine=engine), np.array([1.0, 0.0]), 1e-4)


@dataclasses.dataclass
class _FixedRun:
    total_time: float
    steps: int = 10
    hard_violations: int = 0

    def times(self) -> np.ndarray:
        return np.array([0.0, self.total_time])

    def states(self) -> np.ndarray:
        return np.zeros((2, 2))


class _TableSimulator:
    """Returns total_time = times[(dt, eps)]; listed cells raise HorizonExceeded."""

    def __init__(self, times, failing=()) -> None:
        self.times = times
        self.failing = set(failing)

    def simulate(self, scenario: Scenario) -> _FixedRun:
        key = (scenario.settings.dt, scenario.settings.eps_sign)
        if key in self.failing:
            raise HorizonExceeded(f"no arrival at {key}")
        return _FixedRun(self.times(*key))


DTS = [0.04, 0.01, 0.0025]
EPSS = [0.08, 0.02, 0.005]


class TestCauchyCheck:
    def test_contracting_sequence(self) -> None:
        result = cauchy_check([1.0, 1.1, 1.125, 1.13])
        assert result["passed"] is True
        assert result["deviations"] == pytest.approx([0.1, 0.025, 0.005])

    def test_stalled_sequence(self) -> None:
        assert cauchy_check([1.0, 1.1536, 1.0])["passed"] is False

    def test_single_difference_is_not_enough(self) -> None:
        assert cauchy_check([1.0, 1.1536])["passed"] is False

    def test_floor(self) -> None:
        assert cauchy_check([1.0, 1.0 + 1e-8, 1.0 + 3e-8])["passed"] is True


class TestConvergenceStudy:
    def _scenario(self, toy_parts) -> Scenario:
        _, plan, settings = toy_parts
        return Scenario(TOY, np.array([2.0, 0.0]), plan, settings)

    def test_lengths_must_match(self, toy_parts) -> None:
        sim = toy_parts[0]
        with pytest.raises(ValidationError):
            convergence_study(sim, self._scenario(toy_parts), [0.01, 0.005, 0.0025], [0.02, 0.01])

    def test_two_levels_rejected(self, toy_parts) -> None:
        with pytest.raises(ValidationError):
            convergence_study(toy_parts[0], self._scenario(toy_parts), [0.2, 0.001], [0.5, 0.001])

    def test_levels_must_refine(self, toy_parts) -> None:
        with pytest.raises(ValidationError):
            convergence_study(toy_parts[0], self._scenario(toy_parts), [0.01, 0.02, 0.005], [0.04, 0.02, 0.01])

    def test_first_order_grid_passes(self, toy_parts) -> None:
        sim = _TableSimulator(lambda dt, eps: 1.0 + dt + eps)
        result = convergence_study(sim, self._scenario(toy_parts), DTS, EPSS)
        assert result["cauchy"] is True
        assert len(result["grid"]) == 9
        assert result["diagonal"]["total_time"]["deviations"] == pytest.approx([0.09, 0.0225])
        assert all(line["passed"] for line in result["rows"] + result["columns"])

    def test_stalled_diagonal_fails(self, toy_parts) -> None:
        sim = _TableSimulator(lambda dt, eps: 1.0 + 0.1536 * (dt == DTS[1]))
        result = convergence_study(sim, self._scenario(toy_parts), DTS, EPSS)
        assert result["cauchy"] is False
        assert result["diagonal"]["total_time"]["passed"] is False

    def test_growing_row_fails(self, toy_parts) -> None:
        # diagonal converges but the coarsest-dt row drifts as eps refines
        def times(dt: float, eps: float) -> float:
            if dt == DTS[0]:
                return 1.0 + {EPSS[0]: 0.0, EPSS[1]: 0.01, EPSS[2]: 0.5}[eps] + 0.12
            return 1.0 + dt + eps

        result = convergence_study(_TableSimulator(times), self._scenario(toy_parts), DTS, EPSS)
        assert result["diagonal"]["total_time"]["passed"] is True
        assert result["rows"][0]["passed"] is False
        assert result["cauchy"] is False

    def test_failed_cell_is_recorded_and_skipped(self, toy_parts) -> None:
        sim = _TableSimulator(lambda dt, eps: 1.0 + dt + eps, failing=[(DTS[0], EPSS[2])])
        result = convergence_study(sim, self._scenario(toy_parts), DTS, EPSS)
        failed = [row for row in result["grid"] if "error" in row]
        assert len(failed) == 1
        assert failed[0]["error"].startswith("horizon:")
        assert result["rows"][0]["passed"] is None
        assert result["rows"][0]["dropped"] == 1
        assert result["cauchy"] is True

    def test_failed_diagonal_cell_fails(self, toy_parts) -> None:
        sim = _TableSimulator(lambda dt, eps: 1.0 + dt + eps, failing=[(DTS[0], EPSS[0])])
        result = convergence_study(sim, self._scenario(toy_parts), DTS, EPSS)
        assert result["diagonal"]["failed_cells"] == [0]
        assert result["sample_time"] is None
        assert result["cauchy"] is False

    def test_toy_refinement(self, toy_parts) -> None:
        sim = toy_parts[0]
        result = convergence_study(sim, self._scenario(toy_parts), [0.02, 0.005, 0.00125], [0.04, 0.01, 0.0025])
        assert len(result["grid"]) == 9
        assert result["diagonal"]["failed_cells"] == []
        diagonal = [row for row in result["grid"] if row["eps_sign"] == 2.0 * row["dt"]]
        assert len(diagonal) == 3
        assert all(row["hard_violations"] == 0 for row in diagonal)
        assert len(result["diagonal"]["total_time"]["deviations"]) == 2
        assert result["diagonal"]["total_time"]["passed"] is True
        assert result["sample_time"] > 0.0
