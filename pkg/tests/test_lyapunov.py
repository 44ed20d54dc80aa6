"""Tests for the exact Lyapunov construction: proves the Gram matrix,
its integer inverse and the certificate inequalities."""

import pytest
import sympy

from oscsteer.errors import ValidationError
from oscsteer.terminal.lyapunov import (
    forms_identity_residual,
    gram_matrix,
    jacobi_coefficients,
    jacobi_polynomial,
    leading_minors,
    lyapunov_certificate,
    lyapunov_matrix,
    weight_note,
)

Q4 = 20 * sympy.Matrix([
    [1, -9, 21, -14],
    [-9, 111, -294, 210],
    [21, -294, 840, -630],
    [-14, 210, -630, 490],
])


class TestGram:
    def test_entries(self) -> None:
        q = gram_matrix(2)
        assert q == sympy.Matrix([[sympy.Rational(1, 2), sympy.Rational(1, 6)],
                                  [sympy.Rational(1, 6), sympy.Rational(1, 12)]])

    def test_entries_are_weighted_moments(self) -> None:
        x = sympy.Symbol("x")
        q = gram_matrix(3)
        for i in range(3):
            for j in range(3):
                assert q[i, j] == sympy.integrate(x ** (i + j) * (1 - x), (x, 0, 1))

    def test_positive_definite(self) -> None:
        assert all(m > 0 for m in leading_minors(sympy.Matrix(gram_matrix(6))))

    def test_bad_dimension(self) -> None:
        with pytest.raises(ValidationError):
            gram_matrix(0)


class TestJacobi:
    def test_low_degrees(self) -> None:
        x = sympy.Symbol("x")
        assert jacobi_polynomial(0).as_expr() == 1
        assert sympy.expand(jacobi_polynomial(1).as_expr() - (1 - 3 * x)) == 0

    def test_orthogonality(self) -> None:
        x = sympy.Symbol("x")
        polys = [jacobi_polynomial(n).as_expr() for n in range(4)]
        for m in range(4):
            for n in range(4):
                value = sympy.integrate(polys[m] * polys[n] * (1 - x), (x, 0, 1))
                expected = sympy.Rational(1, 2 * (n + 1)) if m == n else 0
                assert value == expected

    def test_coefficients_are_integer_lower_triangular(self) -> None:
        jac = jacobi_coefficients(5)
        for i in range(5):
            for j in range(5):
                assert jac[i, j].is_integer
                if j > i:
                    assert jac[i, j] == 0


class TestLyapunovMatrix:
    def test_dim_two(self) -> None:
        assert lyapunov_matrix(2) == sympy.Matrix([[6, -12], [-12, 36]])

    def test_dim_four(self) -> None:
        assert lyapunov_matrix(4) == Q4

    @pytest.mark.parametrize("dim", range(1, 9))
    def test_inverse_of_gram(self, dim: int) -> None:
        assert sympy.Matrix(lyapunov_matrix(dim)) * sympy.Matrix(gram_matrix(dim)) == sympy.eye(dim)

    @pytest.mark.parametrize("dim", range(1, 9))
    def test_corner_entry(self, dim: int) -> None:
        assert lyapunov_matrix(dim)[0, 0] == dim * (dim + 1)


class TestCertificate:
    @pytest.mark.parametrize("dim", range(1, 9))
    def test_passes(self, dim: int) -> None:
        cert = lyapunov_certificate(dim)
        assert cert.passed, cert.to_dict()

    @pytest.mark.parametrize("dim", [1, 2, 4])
    def test_corner_divides_all(self, dim: int) -> None:
        assert lyapunov_certificate(dim).q11_divides_all

    def test_forms_identity(self) -> None:
        y = [sympy.Integer(1), sympy.Rational(2, 3), sympy.Integer(-1), sympy.Integer(3)]
        assert forms_identity_residual(4, y) == 0

    def test_to_dict(self) -> None:
        doc = lyapunov_certificate(2).to_dict()
        assert doc["passed"] is True
        assert doc["dim"] == 2

    def test_weight_note_names_the_weight(self) -> None:
        assert "(1 - x)" in weight_note()
