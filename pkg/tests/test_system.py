"""Tests for the oscillator data models: proves validation, exactness and the free flow."""

import math

import numpy as np
import pytest
import sympy
from scipy import linalg

from oscsteer.errors import DimensionMismatch, DuplicateFrequency, ValidationError
from oscsteer.models.system import (
    MomentumVector,
    OscillatorSystem,
    PhaseState,
    as_array,
    z_of_momentum,
)


class TestConstruction:
    def test_expression_frequencies_keep_exact_squares(self) -> None:
        system = OscillatorSystem.from_values([1, "sqrt(2)"])
        assert system.is_exact
        assert system.omega_sq_exact == (sympy.Integer(1), sympy.Integer(2))
        assert system.labels == ("1", "sqrt(2)")
        assert system.omega[1] == pytest.approx(math.sqrt(2.0), rel=1e-15)

    def test_integral_float_is_exact(self) -> None:
        assert OscillatorSystem.from_values([1.0, 3.0]).is_exact

    def test_non_integral_float_is_floating(self) -> None:
        system = OscillatorSystem.from_values([0.7, 1.3])
        assert not system.is_exact
        np.testing.assert_allclose(system.omega_sq, [0.49, 1.69])

    def test_duplicate_rejected(self) -> None:
        with pytest.raises(DuplicateFrequency):
            OscillatorSystem.from_values([1, 2, 1])

    def test_duplicate_is_value_error(self) -> None:
        with pytest.raises(ValueError):
            OscillatorSystem((2.0, 2.0))

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("inf"), float("nan")])
    def test_non_positive_or_non_finite_rejected(self, bad: float) -> None:
        with pytest.raises(ValidationError) as exc:
            OscillatorSystem((1.0, bad))
        assert exc.value.field == "frequencies"

    def test_empty_rejected(self) -> None:
        with pytest.raises(ValidationError):
            OscillatorSystem(())

    def test_unparseable_expression_rejected(self) -> None:
        with pytest.raises(ValidationError):
            OscillatorSystem.from_values(["sqrt(("])

    def test_bool_rejected(self) -> None:
        with pytest.raises(ValidationError):
            OscillatorSystem.from_values([True])


class TestMatrices:
    def test_single_oscillator(self) -> None:
        system = OscillatorSystem.from_values([1])
        np.testing.assert_array_equal(system.A, [[0.0, 1.0], [-1.0, 0.0]])
        np.testing.assert_array_equal(system.B, [0.0, 1.0])

    def test_two_oscillators_block_diagonal(self) -> None:
        system = OscillatorSystem.from_values([1, 2])
        a = system.A
        assert a[2, 3] == 1.0 and a[3, 2] == -4.0
        assert a[0, 2] == 0.0 and a[1, 3] == 0.0
        np.testing.assert_array_equal(system.B, [0.0, 1.0, 0.0, 1.0])

    def test_rhs_matches_matrices(self) -> None:
        system = OscillatorSystem.from_values([0.8, 1.9])
        x = np.array([0.3, -1.2, 2.0, 0.4])
        np.testing.assert_allclose(system.rhs(x, 0.25), system.A @ x + system.B * 0.25)


class TestStates:
    def test_energetic_vector(self) -> None:
        system = OscillatorSystem.from_values([1, 2])
        np.testing.assert_allclose(system.energetic([3.0, 4.0, 1.0, 0.0]), [5.0, 2.0])

    def test_wrong_length_rejected(self) -> None:
        system = OscillatorSystem.from_values([1])
        with pytest.raises(DimensionMismatch):
            system.energetic([1.0, 2.0, 3.0])

    def test_free_flow_matches_matrix_exponential(self) -> None:
        system = OscillatorSystem.from_values([1, "sqrt(2)"])
        x = np.array([1.0, -0.5, 0.25, 2.0])
        for t in (0.0, 0.7, 5.3):
            np.testing.assert_allclose(system.free_flow(x, t), linalg.expm(system.A * t) @ x, atol=1e-12)

    def test_free_flow_preserves_energetic_vector(self) -> None:
        system = OscillatorSystem.from_values([0.6, 1.7, 2.9])
        x = np.random.default_rng(0).standard_normal(6)
        np.testing.assert_allclose(system.energetic(system.free_flow(x, 3.1)), system.energetic(x), rtol=1e-12)

    def test_phase_state_wraps_array(self) -> None:
        system = OscillatorSystem.from_values([1])
        state = PhaseState.of([3, 4])
        assert state.coords == (3.0, 4.0)
        np.testing.assert_allclose(state.energetic(system), [5.0])
        np.testing.assert_array_equal(as_array(state), [3.0, 4.0])


class TestMomentum:
    def test_z_of_momentum(self) -> None:
        system = OscillatorSystem.from_values([2])
        np.testing.assert_allclose(z_of_momentum(system, np.array([2.0, 0.0])), [1.0])
        np.testing.assert_allclose(z_of_momentum(system, np.array([0.0, -3.0])), [3.0])

    def test_momentum_vector_z_nonnegative(self) -> None:
        system = OscillatorSystem.from_values([1, 3])
        p = MomentumVector.of([-1.0, -2.0, 3.0, -4.0])
        z = p.z(system)
        assert np.all(z >= 0.0)
        np.testing.assert_allclose(z, [math.hypot(2.0, 1.0), math.hypot(4.0, 1.0)])


class TestSerialization:
    def test_to_dict(self) -> None:
        doc = OscillatorSystem.from_values([1, "sqrt(2)"]).to_dict()
        assert doc["labels"] == ["1", "sqrt(2)"]
        assert doc["exact"] is True
        assert len(doc["omega"]) == 2
