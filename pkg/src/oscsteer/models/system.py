"""Oscillator system and state data models.

The controlled system is N oscillators driven by one common control:

    x_i' = y_i,   y_i' = -omega_i^2 x_i + u,   |u| <= 1.

States and momenta are stored interleaved as (x_1, y_1, ..., x_N, y_N)
and (xi_1, eta_1, ..., xi_N, eta_N). Frequencies may carry an exact
rational square so that the canonical and terminal constructions can
run in exact arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import sympy

from oscsteer.errors import DimensionMismatch, DuplicateFrequency, ValidationError

FrequencyInput = Union[int, float, str, sympy.Expr]


def _parse_frequency(value: FrequencyInput) -> sympy.Expr:
    if isinstance(value, bool):
        raise ValidationError("frequencies", f"not a number: {value!r}")
    if isinstance(value, sympy.Expr):
        return value
    if isinstance(value, int):
        return sympy.Integer(value)
    if isinstance(value, float):
        if value.is_integer():
            return sympy.Integer(int(value))
        return sympy.Float(value)
    if isinstance(value, str):
        try:
            return sympy.sympify(value, rational=False)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ValidationError("frequencies", f"cannot parse {value!r}") from exc
    raise ValidationError("frequencies", f"unsupported value {value!r}")


def _exact_square(expr: sympy.Expr) -> Optional[sympy.Rational]:
    if isinstance(expr, sympy.Float):
        return None
    sq = sympy.nsimplify(sympy.expand(expr ** 2))
    if sq.is_Rational:
        return sympy.Rational(sq)
    return None


@dataclass(frozen=True)
class OscillatorSystem:
    """N oscillators with pairwise distinct positive frequencies.

    Usage:
        sys = OscillatorSystem.from_values([1, "sqrt(2)"])
        sys.A, sys.B
    """
    omega: tuple[float, ...]
    omega_sq_exact: Optional[tuple[sympy.Rational, ...]] = None
    labels: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if len(self.omega) == 0:
            raise ValidationError("frequencies", "at least one oscillator is required")
        for w in self.omega:
            if not math.isfinite(w) or w <= 0.0:
                raise ValidationError("frequencies", f"must be finite and positive, got {w}")
        seen = sorted(self.omega)
        for a, b in zip(seen, seen[1:]):
            if a == b:
                raise DuplicateFrequency(
                    f"frequency {a} repeated; distinct eigenfrequencies are required "
                    "for controllability (Kalman condition)"
                )
        if self.omega_sq_exact is not None:
            if len(self.omega_sq_exact) != len(self.omega):
                raise DimensionMismatch("omega_sq_exact length differs from omega")
            if len(set(self.omega_sq_exact)) != len(self.omega_sq_exact):
                raise DuplicateFrequency("exact squared frequencies repeat")

    @classmethod
    def from_values(cls, values: Sequence[FrequencyInput]) -> OscillatorSystem:
        """Build from numbers or expression strings such as "sqrt(2)"."""
        exprs = [_parse_frequency(v) for v in values]
        omega = []
        for expr, raw in zip(exprs, values):
            try:
                omega.append(float(expr))
            except (TypeError, ValueError) as exc:
                raise ValidationError("frequencies", f"not numeric: {raw!r}") from exc
        squares = [_exact_square(e) for e in exprs]
        exact = tuple(squares) if all(s is not None for s in squares) else None
        labels = tuple(str(e) for e in exprs)
        return cls(omega=tuple(omega), omega_sq_exact=exact, labels=labels)

    @property
    def n(self) -> int:
        return len(self.omega)

    @property
    def dim(self) -> int:
        return 2 * len(self.omega)

    @property
    def is_exact(self) -> bool:
        return self.omega_sq_exact is not None

    @property
    def omega_array(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=float)

    @property
    def omega_sq(self) -> np.ndarray:
        if self.omega_sq_exact is not None:
            return np.array([float(s) for s in self.omega_sq_exact])
        return self.omega_array ** 2

    @property
    def A(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        for i, w2 in enumerate(self.omega_sq):
            a[2 * i, 2 * i + 1] = 1.0
            a[2 * i + 1, 2 * i] = -w2
        return a

    @property
    def B(self) -> np.ndarray:
        b = np.zeros(self.dim)
        b[1::2] = 1.0
        return b

    def check_state(self, x: np.ndarray, name: str = "x") -> np.ndarray:
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.shape[0] != self.dim:
            raise DimensionMismatch(f"{name} has length {arr.shape[0]}, expected {self.dim}")
        return arr

    def energetic(self, x: np.ndarray) -> np.ndarray:
        """e_i = sqrt(omega_i^2 x_i^2 + y_i^2)."""
        arr = self.check_state(x)
        return np.hypot(self.omega_array * arr[0::2], arr[1::2])

    def free_flow(self, x: np.ndarray, t: float) -> np.ndarray:
        """exp(A t) x in closed form."""
        arr = self.check_state(x)
        w = self.omega_array
        c, s = np.cos(w * t), np.sin(w * t)
        pos, vel = arr[0::2], arr[1::2]
        out = np.empty_like(arr)
        out[0::2] = pos * c + vel * s / w
        out[1::2] = -pos * w * s + vel * c
        return out

    def rhs(self, x: np.ndarray, u: float) -> np.ndarray:
        out = np.empty_like(x)
        out[0::2] = x[1::2]
        out[1::2] = -self.omega_sq * x[0::2] + u
        return out

    def to_dict(self) -> dict:
        return {
            "omega": list(self.omega),
            "labels": list(self.labels) if self.labels else [repr(w) for w in self.omega],
            "exact": self.is_exact,
        }


@dataclass(frozen=True)
class PhaseState:
    """A state x in interleaved (position, velocity) pairs."""
    coords: tuple[float, ...]

    @classmethod
    def of(cls, values: Sequence[float]) -> PhaseState:
        return cls(tuple(float(v) for v in values))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def energetic(self, system: OscillatorSystem) -> np.ndarray:
        return system.energetic(self.array)


@dataclass(frozen=True)
class MomentumVector:
    """A momentum p in interleaved (xi, eta) pairs, dual to (x, y)."""
    coords: tuple[float, ...]

    @classmethod
    def of(cls, values: Sequence[float]) -> MomentumVector:
        return cls(tuple(float(v) for v in values))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def z(self, system: OscillatorSystem) -> np.ndarray:
        return z_of_momentum(system, self.array)


def z_of_momentum(system: OscillatorSystem, p: np.ndarray) -> np.ndarray:
    """z_i = sqrt(eta_i^2 + omega_i^-2 xi_i^2)."""
    arr = system.check_state(p, "p")
    return np.hypot(arr[1::2], arr[0::2] / system.omega_array)


def as_array(value: object) -> np.ndarray:
    """Accept PhaseState, MomentumVector or any array-like."""
    if isinstance(value, (PhaseState, MomentumVector)):
        return value.array
    return np.asarray(value, dtype=float).reshape(-1)


@dataclass(frozen=True)
class SingularLocusFlag:
    """Whether z sits on the locus z_i = +-z_j with all others zero."""
    is_singular: bool
    witness: Optional[tuple[int, int]] = None
