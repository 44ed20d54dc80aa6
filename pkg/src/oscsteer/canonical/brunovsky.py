"""Reduction of the oscillator system to Brunovsky canonical form.

The feedback u = Cx + v makes A + BC nilpotent, and the gauge matrix D
conjugates it to the canonical pair

    D^-1 (A + BC) D = Afrak,   D^-1 B = Bfrak = (1, 0, ..., 0),

where Afrak has subdiagonal (-1, -2, ..., -(2n - 1)). With rational
squared frequencies everything is built in exact sympy arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
import sympy

from oscsteer.errors import DuplicateFrequency, ValidationError
from oscsteer.models.system import OscillatorSystem

DEFAULT_MAX_N = 8


def _squares(system: OscillatorSystem) -> list[Any]:
    if system.omega_sq_exact is not None:
        return list(system.omega_sq_exact)
    return [float(w) for w in system.omega_sq]


def _feedback_coefficients(w2: Sequence[Any]) -> list[Any]:
    n = len(w2)
    sign = 1 if (n + 1) % 2 == 0 else -1
    coeffs = []
    for k, wk in enumerate(w2):
        denom = 1
        for i, wi in enumerate(w2):
            if i != k:
                diff = wi - wk
                if diff == 0:
                    raise DuplicateFrequency(f"omega_{i + 1} equals omega_{k + 1}")
                denom = denom * diff
        coeffs.append(sign * wk ** n / denom)
    return coeffs


def _lambdas(w2: Sequence[Any]) -> list[Any]:
    total = sum(w2)
    return [total - wk for wk in w2]


def _gauge_entries(w2: Sequence[Any], exact: bool) -> list[list[Any]]:
    n = len(w2)
    lam = _lambdas(w2)
    zero = sympy.Integer(0) if exact else 0.0
    rows = [[zero] * (2 * n) for _ in range(2 * n)]
    for i in range(n):
        for j in range(n):
            sign = -1 if j % 2 else 1
            power = lam[i] ** j
            if exact:
                odd = sympy.Rational(1, math.factorial(2 * j + 1))
                even = sympy.Rational(1, math.factorial(2 * j))
            else:
                odd = 1.0 / math.factorial(2 * j + 1)
                even = 1.0 / math.factorial(2 * j)
            rows[2 * i][2 * j + 1] = -sign * power * odd
            rows[2 * i + 1][2 * j] = sign * power * even
    return rows


def canonical_pair(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """(Afrak, Bfrak) for a 2n-dimensional chain."""
    a = np.zeros((dim, dim))
    for k in range(dim - 1):
        a[k + 1, k] = -(k + 1)
    b = np.zeros(dim)
    b[0] = 1.0
    return a, b


def canonical_pair_exact(dim: int) -> tuple[sympy.Matrix, sympy.Matrix]:
    a = sympy.zeros(dim, dim)
    for k in range(dim - 1):
        a[k + 1, k] = -(k + 1)
    b = sympy.zeros(dim, 1)
    b[0, 0] = 1
    return a, b


def _system_matrices_exact(w2: Sequence[Any]) -> tuple[sympy.Matrix, sympy.Matrix]:
    n = len(w2)
    a = sympy.zeros(2 * n, 2 * n)
    b = sympy.zeros(2 * n, 1)
    for i, w in enumerate(w2):
        a[2 * i, 2 * i + 1] = 1
        a[2 * i + 1, 2 * i] = -w
        b[2 * i + 1, 0] = 1
    return a, b


def _to_float(matrix: sympy.Matrix) -> np.ndarray:
    return np.array(matrix.tolist(), dtype=float)


def feedback_row(system: OscillatorSystem) -> np.ndarray:
    """C = (c_1, 0, ..., c_N, 0) with c_k = (-1)^(N+1) w_k^2N / prod_(i!=k)(w_i^2 - w_k^2)."""
    coeffs = _feedback_coefficients(_squares(system))
    row = np.zeros(system.dim)
    row[0::2] = [float(c) for c in coeffs]
    return row


def feedback_row_exact(system: OscillatorSystem) -> Optional[sympy.Matrix]:
    if system.omega_sq_exact is None:
        return None
    coeffs = _feedback_coefficients(list(system.omega_sq_exact))
    row = sympy.zeros(1, system.dim)
    for k, c in enumerate(coeffs):
        row[0, 2 * k] = c
    return row


def gauge_matrix(system: OscillatorSystem) -> np.ndarray:
    """D from the 2x2 blocks d_ij; its columns are the basis vectors e_i."""
    if system.omega_sq_exact is not None:
        return _to_float(gauge_matrix_exact(system))
    return np.array(_gauge_entries(_squares(system), exact=False), dtype=float)


def gauge_matrix_exact(system: OscillatorSystem) -> Optional[sympy.Matrix]:
    if system.omega_sq_exact is None:
        return None
    return sympy.Matrix(_gauge_entries(list(system.omega_sq_exact), exact=True))


@dataclass(frozen=True, eq=False)
class CanonicalTransform:
    """Linear feedback C, gauge D and the canonical pair they produce."""
    C: np.ndarray
    D: np.ndarray
    D_inv: np.ndarray
    A_frak: np.ndarray
    B_frak: np.ndarray
    lam: np.ndarray
    exact: bool
    cond_D: float
    C_exact: Optional[sympy.Matrix] = None
    D_exact: Optional[sympy.Matrix] = None

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    def to_canonical(self, x: np.ndarray) -> np.ndarray:
        return self.D_inv @ x

    def to_physical(self, x_frak: np.ndarray) -> np.ndarray:
        return self.D @ x_frak

    def to_dict(self) -> dict:
        def fmt(exact: Optional[sympy.Matrix], approx: np.ndarray) -> Any:
            if exact is not None:
                return [[str(v) for v in row] for row in exact.tolist()]
            return approx.tolist()

        return {
            "C": fmt(self.C_exact, np.atleast_2d(self.C)),
            "D": fmt(self.D_exact, self.D),
            "A_frak": self.A_frak.astype(int).tolist(),
            "lambda": self.lam.tolist(),
            "exact": self.exact,
            "cond_D": self.cond_D,
        }


def build_transform(system: OscillatorSystem, max_n: int = DEFAULT_MAX_N) -> CanonicalTransform:
    """Assemble C, D and the canonical pair for the system."""
    if system.n > max_n:
        raise ValidationError("frequencies", f"n = {system.n} exceeds the factorial cap {max_n}")
    a_frak, b_frak = canonical_pair(system.dim)
    lam = np.array([float(v) for v in _lambdas(_squares(system))])
    if system.omega_sq_exact is not None:
        c_exact = feedback_row_exact(system)
        d_exact = gauge_matrix_exact(system)
        d = _to_float(d_exact)
        d_inv = _to_float(d_exact.inv())
        c = _to_float(c_exact).reshape(-1)
    else:
        c_exact = d_exact = None
        c = feedback_row(system)
        d = gauge_matrix(system)
        d_inv = np.linalg.inv(d)
    return CanonicalTransform(
        C=c,
        D=d,
        D_inv=d_inv,
        A_frak=a_frak,
        B_frak=b_frak,
        lam=lam,
        exact=system.omega_sq_exact is not None,
        cond_D=float(np.linalg.cond(d)),
        C_exact=c_exact,
        D_exact=d_exact,
    )


def basis_vectors(system: OscillatorSystem, transform: CanonicalTransform) -> np.ndarray:
    """Columns e_i = ((-1)^(i-1)/(i-1)!) (A + BC)^(i-1) B."""
    closed = system.A + np.outer(system.B, transform.C)
    cols = []
    v = system.B.copy()
    for i in range(system.dim):
        cols.append(((-1) ** i / math.factorial(i)) * v)
        v = closed @ v
    return np.column_stack(cols)


@dataclass(frozen=True)
class ReductionReport:
    """Residuals of every identity of the canonical reduction.

    Floating-point residuals are scaled: nilpotency by ||A + BC||^2n,
    conjugation by ||A + BC|| ||D||, interpolation by the magnitude of
    the terms being cancelled.
    """
    n: int
    exact: bool
    nilpotency: float
    nilpotency_index_ok: bool
    conjugation: float
    input_vector: float
    interpolation: float
    coefficient_sum: float
    cond_D: float
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.nilpotency_index_ok
            and max(self.nilpotency, self.conjugation, self.input_vector,
                    self.interpolation, self.coefficient_sum) <= self.tol
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "exact": self.exact,
            "nilpotency": self.nilpotency,
            "nilpotency_index_ok": self.nilpotency_index_ok,
            "conjugation": self.conjugation,
            "input_vector": self.input_vector,
            "interpolation": self.interpolation,
            "coefficient_sum": self.coefficient_sum,
            "cond_D": self.cond_D,
            "tol": self.tol,
            "passed": self.passed,
        }


def _interpolation_residual(w2: np.ndarray, c: np.ndarray, samples: int = 401) -> float:
    s2 = np.linspace(-2.0, 2.0, samples) ** 2
    factors = s2[:, None] + w2[None, :]
    full = np.prod(factors, axis=1)
    n = w2.size
    partial = np.stack([np.prod(np.delete(factors, k, axis=1), axis=1) for k in range(n)], axis=1)
    residual = full - s2 ** n - partial @ c
    scale = np.abs(full) + s2 ** n + np.abs(partial) @ np.abs(c)
    return float(np.max(np.abs(residual) / scale))


def verify_reduction(system: OscillatorSystem, tol: float = 1e-9,
                     transform: Optional[CanonicalTransform] = None) -> ReductionReport:
    """Check nilpotency, conjugation, D^-1 B and the interpolation identity."""
    transform = transform or build_transform(system)
    dim, n = system.dim, system.n
    coeffs = transform.C[0::2]
    w2 = system.omega_sq
    coeff_sum = abs(float(coeffs.sum()) - float(w2.sum())) / max(1.0, float(np.abs(coeffs).sum()))
    if transform.exact:
        a, b = _system_matrices_exact(list(system.omega_sq_exact))
        closed = a + b * transform.C_exact
        d = transform.D_exact
        a_frak, b_frak = canonical_pair_exact(dim)
        power = closed ** (dim - 1)
        index_ok = any(v != 0 for v in power)
        power = power * closed
        nil = max(abs(float(v)) for v in power)
        conj = max(abs(float(v)) for v in (closed * d - d * a_frak))
        inp = max(abs(float(v)) for v in (d * b_frak - b))
        exact_sum = sum(transform.C_exact) - sum(system.omega_sq_exact)
        coeff_sum = abs(float(exact_sum))
    else:
        closed = system.A + np.outer(system.B, transform.C)
        norm = max(1.0, float(np.linalg.norm(closed, 2)))
        # D has the Krylov vectors of (A + BC, B) as columns, so full rank
        # means (A + BC)^(2n-1) B != 0
        index_ok = np.linalg.matrix_rank(transform.D) == dim
        power = np.linalg.matrix_power(closed, dim)
        nil = float(np.max(np.abs(power))) / norm ** dim
        d = transform.D
        conj = float(np.max(np.abs(closed @ d - d @ transform.A_frak))) / (
            norm * max(1.0, float(np.linalg.norm(d, 2)))
        )
        inp = float(np.max(np.abs(np.linalg.solve(d, system.B) - transform.B_frak)))
    return ReductionReport(
        n=n,
        exact=transform.exact,
        nilpotency=nil,
        nilpotency_index_ok=bool(index_ok),
        conjugation=conj,
        input_vector=inp,
        interpolation=_interpolation_residual(w2, coeffs),
        coefficient_sum=coeff_sum,
        cond_D=transform.cond_D,
        tol=tol,
    )


@dataclass(frozen=True)
class ToyIdentification:
    """How the single-oscillator coordinates map to canonical ones."""
    d_inverse: tuple[tuple[float, float], tuple[float, float]]
    canonical_of_state: str
    physical_control: str
    implemented_orientation_ok: bool
    printed_orientation_ok: bool


def toy_identification(transform: CanonicalTransform) -> ToyIdentification:
    """Record the gauge for n = 1 and test both basis orientations.

    An orientation P is consistent when P (A + BC) P^-1 = Afrak.
    """
    if transform.dim != 2:
        raise ValidationError("frequencies", "toy identification needs one oscillator")
    closed = np.array([[0.0, 1.0], [-1.0, 0.0]]) + np.outer([0.0, 1.0], transform.C)

    def consistent(p: np.ndarray) -> bool:
        return bool(np.allclose(p @ closed @ np.linalg.inv(p), transform.A_frak, atol=1e-12))

    printed = np.array([[0.0, 1.0], [1.0, 0.0]])
    d_inv = transform.D_inv
    return ToyIdentification(
        d_inverse=((float(d_inv[0, 0]), float(d_inv[0, 1])), (float(d_inv[1, 0]), float(d_inv[1, 1]))),
        canonical_of_state="xfrak = (y, -x)",
        physical_control="u = x - 3 y / Tfrak - 6 x / Tfrak^2",
        implemented_orientation_ok=consistent(d_inv),
        printed_orientation_ok=consistent(printed),
    )
