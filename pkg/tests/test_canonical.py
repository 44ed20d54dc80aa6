"""Tests for the canonical reduction: proves the feedback row, the gauge
matrix and the conjugation to the nilpotent chain."""

import numpy as np
import pytest
import sympy
from scipy.linalg import expm

from oscsteer.canonical.brunovsky import (
    basis_vectors,
    build_transform,
    canonical_pair,
    canonical_pair_exact,
    feedback_row,
    feedback_row_exact,
    gauge_matrix,
    toy_identification,
    verify_reduction,
)
from oscsteer.errors import ValidationError
from oscsteer.models.system import OscillatorSystem


class TestCanonicalPair:
    def test_subdiagonal(self) -> None:
        a, b = canonical_pair(4)
        np.testing.assert_array_equal(np.diag(a, -1), [-1, -2, -3])
        assert np.count_nonzero(a) == 3
        np.testing.assert_array_equal(b, [1, 0, 0, 0])

    def test_nilpotent_of_full_index(self) -> None:
        a, _ = canonical_pair(6)
        assert np.any(np.linalg.matrix_power(a, 5))
        assert not np.any(np.linalg.matrix_power(a, 6))

    def test_exact_matches_float(self) -> None:
        a, b = canonical_pair_exact(4)
        np.testing.assert_array_equal(np.array(a.tolist(), dtype=float), canonical_pair(4)[0])
        assert b[0, 0] == 1


class TestFeedbackRow:
    def test_single_oscillator(self) -> None:
        np.testing.assert_array_equal(feedback_row(OscillatorSystem.from_values([1])), [1.0, 0.0])

    def test_two_oscillators(self) -> None:
        row = feedback_row(OscillatorSystem.from_values([1, 2]))
        np.testing.assert_allclose(row, [-1 / 3, 0.0, 16 / 3, 0.0], rtol=1e-15)

    def test_exact_row(self) -> None:
        row = feedback_row_exact(OscillatorSystem.from_values([1, 2]))
        assert list(row) == [sympy.Rational(-1, 3), 0, sympy.Rational(16, 3), 0]

    def test_coefficients_sum_to_total_square(self) -> None:
        row = feedback_row_exact(OscillatorSystem.from_values([1, 2, 3]))
        assert sum(row) == 1 + 4 + 9

    def test_inexact_system_has_no_exact_row(self) -> None:
        assert feedback_row_exact(OscillatorSystem.from_values([1.0, 1.7])) is None


class TestGauge:
    def test_single_oscillator(self) -> None:
        t = build_transform(OscillatorSystem.from_values([1]))
        np.testing.assert_array_equal(t.D, [[0.0, -1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(t.D_inv, [[0.0, 1.0], [-1.0, 0.0]])
        assert t.exact

    def test_columns_are_krylov_basis(self) -> None:
        system = OscillatorSystem.from_values([1, 2, 3])
        t = build_transform(system)
        np.testing.assert_allclose(basis_vectors(system, t), t.D, atol=1e-9)

    def test_float_gauge_matches_exact(self) -> None:
        system = OscillatorSystem.from_values([1, 2])
        t = build_transform(system)
        np.testing.assert_allclose(gauge_matrix(system), t.D)
        np.testing.assert_allclose(t.D @ t.D_inv, np.eye(4), atol=1e-12)

    def test_conjugates_the_flows(self) -> None:
        system = OscillatorSystem.from_values([1, 2])
        t = build_transform(system)
        closed = system.A + np.outer(system.B, t.C)
        for time in (0.3, 1.0, 2.5):
            lhs = t.D @ expm(t.A_frak * time) @ t.D_inv
            np.testing.assert_allclose(lhs, expm(closed * time), atol=1e-10)

    def test_canonical_round_trip(self) -> None:
        t = build_transform(OscillatorSystem.from_values([1, "sqrt(3)"]))
        x = np.array([0.5, -1.0, 2.0, 0.25])
        np.testing.assert_allclose(t.to_physical(t.to_canonical(x)), x, atol=1e-12)

    def test_factorial_cap(self) -> None:
        with pytest.raises(ValidationError):
            build_transform(OscillatorSystem.from_values([1, 2]), max_n=1)

    def test_to_dict_is_exact_text(self) -> None:
        doc = build_transform(OscillatorSystem.from_values([1, 2])).to_dict()
        assert doc["C"] == [["-1/3", "0", "16/3", "0"]]
        assert doc["exact"] is True
        assert doc["A_frak"][1][0] == -1


class TestVerifyReduction:
    @pytest.mark.parametrize("omega", [[1], [1, 2], [1, 2, 3], [1, "sqrt(2)"], [1, 2, 3, 4]])
    def test_exact_systems_pass(self, omega: list) -> None:
        report = verify_reduction(OscillatorSystem.from_values(omega))
        assert report.exact
        assert report.passed, report.to_dict()
        assert report.nilpotency == 0.0

    def test_floating_system_passes(self) -> None:
        report = verify_reduction(OscillatorSystem.from_values([1.0, 1.7]))
        assert not report.exact
        assert report.passed, report.to_dict()

    def test_report_dict(self) -> None:
        doc = verify_reduction(OscillatorSystem.from_values([1, 2])).to_dict()
        assert doc["passed"] is True
        assert doc["nilpotency_index_ok"] is True


class TestToyIdentification:
    def test_orientations(self) -> None:
        ident = toy_identification(build_transform(OscillatorSystem.from_values([1])))
        assert ident.d_inverse == ((0.0, 1.0), (-1.0, 0.0))
        assert ident.implemented_orientation_ok
        assert not ident.printed_orientation_ok

    def test_needs_one_oscillator(self) -> None:
        with pytest.raises(ValidationError):
            toy_identification(build_transform(OscillatorSystem.from_values([1, 2])))
