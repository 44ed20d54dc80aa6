"""Exception hierarchy for oscsteer.

Input conditions subclass ValueError, numerical failures subclass
RuntimeError. Everything derives from OscSteerError so callers can
catch the whole family at the service boundary.
"""

from __future__ import annotations

from typing import Any, Optional


class OscSteerError(Exception):
    """Root of all oscsteer errors."""


# ----------------------------------------------------------------------
# Input conditions
# ----------------------------------------------------------------------

class DimensionMismatch(OscSteerError, ValueError):
    """Vector length or method incompatible with the oscillator count."""


class ZeroVector(OscSteerError, ValueError):
    """A derivative was requested at z = 0."""


class ZeroEnergy(OscSteerError, ValueError):
    """The energetic vector is identically zero."""


class ZeroState(OscSteerError, ValueError):
    """An operation undefined at the origin received x = 0."""


class DuplicateFrequency(OscSteerError, ValueError):
    """Two eigenfrequencies coincide; the system is not controllable."""


class SingularLocus(OscSteerError, ValueError):
    """z lies on the locus z_i = +-z_j with all other components zero."""

    def __init__(self, message: str, witness: Optional[tuple[int, int]] = None) -> None:
        super().__init__(message)
        self.witness = witness


class DegenerateC(OscSteerError, ValueError):
    """The condition-B vector vanished."""


class NotToyCase(OscSteerError, ValueError):
    """The minimum-time oracle only covers one oscillator with omega = 1."""


class ValidationError(OscSteerError, ValueError):
    """A configuration or model field failed validation."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(OscSteerError, ValueError):
    """A configuration document could not be parsed."""

    def __init__(self, source: str, message: str, line: Optional[int] = None) -> None:
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line


# ----------------------------------------------------------------------
# Numerical failures
# ----------------------------------------------------------------------

class QuadratureNotConverged(OscSteerError, RuntimeError):
    """Requested tolerance not reached within the quadrature budget."""

    def __init__(self, message: str, estimate: float = float("nan"), error: float = float("nan")) -> None:
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class NoConvergence(OscSteerError, RuntimeError):
    """An iterative solver exhausted its iteration budget."""


class NoBracket(OscSteerError, RuntimeError):
    """A root could not be bracketed."""


class InternalMismatch(OscSteerError, RuntimeError):
    """Two constructions of the same exact object disagree."""


class NumericalBlowup(OscSteerError, RuntimeError):
    """The integrated state became non-finite."""


class HorizonExceeded(OscSteerError, RuntimeError):
    """The simulation reached t_max before arrival."""

    def __init__(self, message: str, trajectory: Any = None) -> None:
        super().__init__(message)
        self.trajectory = trajectory
