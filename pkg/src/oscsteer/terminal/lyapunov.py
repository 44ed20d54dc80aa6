"""Exact Gram matrix, shifted Jacobi polynomials and the integer
Lyapunov matrix Q = q^-1 of the terminal stage.

    q_ij = integral_0^1 x^(i+j-2) (1 - x) dx = 1 / ((i+j)(i+j-1))

Q is built twice, as the exact inverse of q and as J^T diag(2k) J from
the Jacobi coefficient matrix J, and the two must agree.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import sympy

from oscsteer.canonical.brunovsky import canonical_pair_exact
from oscsteer.errors import InternalMismatch, ValidationError

_X = sympy.Symbol("x")


def _check_dim(dim: int) -> None:
    if dim < 1:
        raise ValidationError("dim", f"must be >= 1, got {dim}")


@functools.lru_cache(maxsize=None)
def gram_matrix(dim: int) -> sympy.ImmutableMatrix:
    """Exact q with q_ij = 1 / ((i+j)(i+j-1)), indices from 1."""
    _check_dim(dim)
    return sympy.ImmutableMatrix(
        dim, dim, lambda i, j: sympy.Rational(1, (i + j + 2) * (i + j + 1))
    )


def jacobi_polynomial(n: int) -> sympy.Poly:
    """P_n = (1 / (n! (1 - x))) d^n/dx^n [(1 - x)(x - x^2)^n]."""
    derivative = sympy.diff((1 - _X) * (_X - _X ** 2) ** n, _X, n)
    quotient, remainder = sympy.div(sympy.Poly(derivative, _X), sympy.Poly(1 - _X, _X))
    if not remainder.is_zero:
        raise InternalMismatch(f"(1 - x) does not divide the Rodrigues derivative for n = {n}")
    return sympy.Poly(quotient.as_expr() / math.factorial(n), _X)


@functools.lru_cache(maxsize=None)
def jacobi_coefficients(dim: int) -> sympy.ImmutableMatrix:
    """Lower-triangular integer matrix; row k holds the coefficients of P_(k-1)."""
    _check_dim(dim)
    rows = []
    for n in range(dim):
        coeffs = list(reversed(jacobi_polynomial(n).all_coeffs()))
        rows.append([sympy.Integer(c) for c in coeffs] + [sympy.Integer(0)] * (dim - len(coeffs)))
    return sympy.ImmutableMatrix(rows)


@functools.lru_cache(maxsize=None)
def lyapunov_matrix(dim: int) -> sympy.ImmutableMatrix:
    """Integer Q = q^-1, cross-checked against J^T diag(2k) J."""
    _check_dim(dim)
    inverse = gram_matrix(dim).inv(method="LU")
    jac = jacobi_coefficients(dim)
    weights = sympy.diag(*[2 * (k + 1) for k in range(dim)])
    product = jac.T * weights * jac
    if sympy.Matrix(inverse) != sympy.Matrix(product):
        raise InternalMismatch(f"q^-1 and J^T diag(2k) J differ for dim = {dim}")
    return sympy.ImmutableMatrix(product)


def leading_minors(matrix: sympy.Matrix) -> list[sympy.Rational]:
    return [matrix[:k, :k].det(method="bareiss") for k in range(1, matrix.shape[0] + 1)]


@dataclass(frozen=True)
class LyapunovCertificate:
    """Exact checks of the common Lyapunov inequalities for one dimension."""
    dim: int
    dissipation_positive: bool
    closed_loop_negative: bool
    bracket_identity: bool
    even_integer: bool
    q11_formula: bool
    q11_divides_all: bool

    @property
    def passed(self) -> bool:
        return (
            self.dissipation_positive
            and self.closed_loop_negative
            and self.bracket_identity
            and self.even_integer
            and self.q11_formula
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "dissipation_positive": self.dissipation_positive,
            "closed_loop_negative": self.closed_loop_negative,
            "bracket_identity": self.bracket_identity,
            "even_integer": self.even_integer,
            "q11_formula": self.q11_formula,
            "q11_divides_all": self.q11_divides_all,
            "passed": self.passed,
        }


def lyapunov_certificate(dim: int) -> LyapunovCertificate:
    """M q + q M > 0 and Afrak q + q Afrak^T - Bfrak Bfrak^T < 0, exactly.

    The two brackets are negatives of each other, which is the matrix
    form of <Q y, (Afrak + Bfrak Cfrak) y> = -<Q y, M y>.
    """
    q = sympy.Matrix(gram_matrix(dim))
    big_q = sympy.Matrix(lyapunov_matrix(dim))
    m = sympy.diag(*range(1, dim + 1))
    a_frak, b_frak = canonical_pair_exact(dim)
    dissipation = m * q + q * m
    closed = a_frak * q + q * a_frak.T - b_frak * b_frak.T
    q11 = big_q[0, 0]
    return LyapunovCertificate(
        dim=dim,
        dissipation_positive=all(v > 0 for v in leading_minors(dissipation)),
        closed_loop_negative=all(v > 0 for v in leading_minors(-closed)),
        bracket_identity=(closed + dissipation) == sympy.zeros(dim, dim),
        even_integer=all(v.is_integer and v % 2 == 0 for v in big_q),
        q11_formula=q11 == dim * (dim + 1),
        q11_divides_all=all(v % q11 == 0 for v in big_q),
    )


def forms_identity_residual(dim: int, y: list[sympy.Rational]) -> sympy.Rational:
    """<Q y, (Afrak + Bfrak Cfrak) y> + <Q y, M y>, zero in exact arithmetic."""
    big_q = sympy.Matrix(lyapunov_matrix(dim))
    a_frak, b_frak = canonical_pair_exact(dim)
    c_frak = -sympy.Rational(1, 2) * b_frak.T * big_q
    m = sympy.diag(*range(1, dim + 1))
    vec = sympy.Matrix(y)
    qy = big_q * vec
    return (qy.T * ((a_frak + b_frak * c_frak) * vec))[0, 0] + (qy.T * (m * vec))[0, 0]


def weight_note() -> str:
    """The only weight implemented for q is (1 - x)_+ on [0, 1]."""
    return (
        "q_ij = integral x^(i+j-2) w(x) dx with w(x) = (1 - x)_+; other weights w "
        "give other Gram matrices and are not built here"
    )
