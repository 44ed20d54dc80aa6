"""Momentum engine: dual direction z, radius rho, momentum p and the
basic bang-bang control.

For a state x with energetic vector e, z maximizes <e, z> over the
convex body {h(z) <= 1}. The optimal value is rho(x) and

    p_i = (z_i / e_i) (omega_i^2 x_i, y_i)

is the outer normal of rho(x) * Omega at x with H(p) = 1. The basic
control is u = -U sign(<p, B>).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from oscsteer.errors import NoConvergence, ValidationError, ZeroEnergy, ZeroState
from oscsteer.geometry.support import SupportGeometry, elliptic2_gradient
from oscsteer.models.system import MomentumVector, OscillatorSystem, as_array
from oscsteer.policy.resolver import DualSolverPolicy, NumericsResolver

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi
DEFAULT_DEADBAND = 1e-6


@dataclass(frozen=True, eq=False)
class DualSolution:
    """Maximizer z of <e, z> on {h <= 1} and the optimal value rho."""
    z: np.ndarray
    rho: float
    iterations: int
    residual: float
    method: str = "closed_form"


@dataclass
class DualTracker:
    """Warm-start cache owned by one trajectory."""
    last_z: Optional[np.ndarray] = None
    solves: int = 0
    iterations: int = field(default=0)

    def remember(self, solution: DualSolution) -> None:
        self.last_z = solution.z
        self.solves += 1
        self.iterations += solution.iterations


def sgn_eps(s: float, eps: float) -> float:
    """Clamped linear regularization of sign with half-width eps."""
    if eps <= 0.0:
        return math.copysign(1.0, s) if s != 0.0 else 0.0
    return max(-1.0, min(1.0, s / eps))


class MomentumEngine:
    """Solves the dual problem and evaluates rho, p and the basic control.

    Usage:
        engine = MomentumEngine.from_resolver(system, resolver)
        engine.rho_norm(x)
        engine.basic_control(x, amplitude=1.0)
    """

    def __init__(self, system: OscillatorSystem, geometry: SupportGeometry, policy: DualSolverPolicy) -> None:
        self._system = system
        self._geometry = geometry
        self._policy = policy

    @classmethod
    def from_resolver(cls, system: OscillatorSystem, resolver: NumericsResolver) -> MomentumEngine:
        return cls(system, SupportGeometry.from_resolver(resolver), resolver.dual_solver())

    @property
    def system(self) -> OscillatorSystem:
        return self._system

    @property
    def geometry(self) -> SupportGeometry:
        return self._geometry

    # ------------------------------------------------------------------
    # Dual problem
    # ------------------------------------------------------------------

    def solve_z(self, e: Sequence[float] | np.ndarray, warm_start: Optional[np.ndarray] = None,
                tol: Optional[float] = None, method: str = "auto") -> DualSolution:
        """Unique maximizer of <e, z> subject to h(z) <= 1.

        method: "auto" (closed form for one live component, angle root
        for two, projected gradient otherwise) or "gradient".
        """
        tol = self._policy.tol if tol is None else tol
        e = np.asarray(e, dtype=float).reshape(-1)
        if e.size != self._system.n:
            raise ValidationError("e", f"expected {self._system.n} components, got {e.size}")
        if np.any(e < 0.0) or not np.all(np.isfinite(e)):
            raise ValidationError("e", "components must be finite and nonnegative")
        live = np.flatnonzero(e > 0.0)
        if live.size == 0:
            raise ZeroEnergy("energetic vector is zero")
        z = np.zeros(e.size)
        sub_e = e[live]
        if live.size == 1:
            z[live] = HALF_PI
            return DualSolution(z, float(sub_e[0]) * HALF_PI, 0, 0.0)
        start = None
        if warm_start is not None:
            start = np.abs(np.asarray(warm_start, dtype=float).reshape(-1))[live]
        if live.size == 2 and method == "auto":
            sub_z, iterations, residual = self._solve_angle(sub_e, tol)
            kind = "angle"
        elif method in ("auto", "gradient"):
            sub_z, iterations, residual = self._solve_gradient(sub_e, start, tol)
            kind = "gradient"
        else:
            raise ValidationError("method", f"unknown dual solver method {method!r}")
        z[live] = sub_z
        return DualSolution(z, float(sub_e @ sub_z), iterations, residual, kind)

    def _kkt_residual(self, e: np.ndarray, z: np.ndarray, grad: np.ndarray) -> float:
        rho = float(e @ z)
        return float(np.linalg.norm(e - rho * grad)) / float(np.linalg.norm(e))

    def _solve_angle(self, e: np.ndarray, tol: float) -> tuple[np.ndarray, int, float]:
        """Two live components: find the angle where grad h is parallel to e."""
        calls = [0]

        def cross(theta: float) -> float:
            calls[0] += 1
            g = elliptic2_gradient(np.array([math.cos(theta), math.sin(theta)]))
            return e[1] * g[0] - e[0] * g[1]

        theta = optimize.brentq(cross, 0.0, HALF_PI, xtol=1e-15, rtol=4.0 * np.finfo(float).eps,
                                maxiter=self._policy.max_iter)
        direction = np.array([math.cos(theta), math.sin(theta)])
        z = direction / self._geometry.h_support(direction)
        grad = elliptic2_gradient(z)
        return z, calls[0], self._kkt_residual(e, z, grad)

    def _normalize(self, z: np.ndarray) -> np.ndarray:
        return z / self._geometry.h_support(z)

    def _solve_gradient(self, e: np.ndarray, start: Optional[np.ndarray],
                        tol: float) -> tuple[np.ndarray, int, float]:
        """Projected gradient ascent on {h = 1} with Barzilai-Borwein steps."""
        p = self._policy
        norm_e = float(np.linalg.norm(e))
        if start is None or not np.all(np.isfinite(start)) or not np.any(start > 0.0):
            start = e / norm_e
        z = self._normalize(np.maximum(start, 0.0))
        rho = float(e @ z)
        grad = self._geometry.h_gradient(z)
        d = (e - rho * grad) / norm_e
        step = p.initial_step
        prev_z = prev_d = None
        for iteration in range(1, p.max_iter + 1):
            residual = float(np.linalg.norm(d))
            if residual <= tol:
                return z, iteration, residual
            if prev_z is not None:
                dz, dd = z - prev_z, d - prev_d
                curvature = -float(dz @ dd)
                if curvature > 0.0:
                    step = float(dz @ dz) / curvature
            accepted = False
            for _ in range(p.max_backtracks):
                trial = np.maximum(z + step * d, 0.0)
                if np.any(trial > 0.0):
                    trial = self._normalize(trial)
                    trial_rho = float(e @ trial)
                    if trial_rho >= rho + p.armijo * step * residual * residual * norm_e:
                        accepted = True
                        break
                step *= p.backtrack_shrink
            if not accepted:
                # no ascent left at working precision
                logger.debug("dual solver stopped by line search at residual %.3e", residual)
                if residual <= math.sqrt(tol):
                    return z, iteration, residual
                raise NoConvergence(f"line search failed at KKT residual {residual:.3e}")
            prev_z, prev_d = z, d
            z, rho = trial, trial_rho
            grad = self._geometry.h_gradient(z)
            d = (e - rho * grad) / norm_e
        residual = float(np.linalg.norm(d))
        if residual <= tol:
            return z, p.max_iter, residual
        raise NoConvergence(f"dual solver exceeded {p.max_iter} iterations (residual {residual:.3e})")

    # ------------------------------------------------------------------
    # State functions
    # ------------------------------------------------------------------

    def _dual_for_state(self, x: np.ndarray, tracker: Optional[DualTracker],
                        tol: Optional[float]) -> tuple[np.ndarray, DualSolution]:
        e = self._system.energetic(x)
        warm = tracker.last_z if tracker is not None else None
        solution = self.solve_z(e, warm_start=warm, tol=tol)
        if tracker is not None:
            tracker.remember(solution)
        return e, solution

    def rho_norm(self, x: Sequence[float] | np.ndarray, tol: Optional[float] = None,
                 tracker: Optional[DualTracker] = None) -> float:
        """rho(x) = max over H(p) <= 1 of <x, p>; zero at the origin."""
        arr = self._system.check_state(as_array(x))
        if not np.any(arr):
            return 0.0
        return self._dual_for_state(arr, tracker, tol)[1].rho

    def rho_gradient(self, x: Sequence[float] | np.ndarray, tol: Optional[float] = None,
                     tracker: Optional[DualTracker] = None) -> np.ndarray:
        """Momentum p(x) as an array; equals the gradient of rho."""
        arr = self._system.check_state(as_array(x))
        if not np.any(arr):
            raise ZeroState("momentum is undefined at x = 0")
        e, solution = self._dual_for_state(arr, tracker, tol)
        scale = np.divide(solution.z, e, out=np.zeros_like(e), where=e > 0.0)
        p = np.empty_like(arr)
        p[0::2] = scale * self._system.omega_sq * arr[0::2]
        p[1::2] = scale * arr[1::2]
        return p

    def momentum_from_state(self, x: Sequence[float] | np.ndarray, tol: Optional[float] = None) -> MomentumVector:
        """p(x) with the eikonal normalization H(p) = 1."""
        return MomentumVector(tuple(float(v) for v in self.rho_gradient(x, tol)))

    def switching_sum(self, x: Sequence[float] | np.ndarray, tol: Optional[float] = None,
                      tracker: Optional[DualTracker] = None) -> tuple[float, float]:
        """(s, rho) with s = sum z_i y_i / e_i = <p(x), B>."""
        arr = self._system.check_state(as_array(x))
        if not np.any(arr):
            raise ZeroState("switching sum is undefined at x = 0")
        e, solution = self._dual_for_state(arr, tracker, tol)
        scale = np.divide(solution.z, e, out=np.zeros_like(e), where=e > 0.0)
        return float(scale @ arr[1::2]), solution.rho

    def basic_control(self, x: Sequence[float] | np.ndarray, amplitude: float = 1.0,
                      deadband: float = DEFAULT_DEADBAND, tol: Optional[float] = None,
                      tracker: Optional[DualTracker] = None) -> float:
        """u = -U sgn_eps(sum z_i y_i / e_i)."""
        if not 0.0 < amplitude <= 1.0:
            raise ValidationError("amplitude", f"must lie in (0, 1], got {amplitude}")
        s, _ = self.switching_sum(x, tol, tracker)
        return -amplitude * sgn_eps(s, deadband)

    def hamiltonian_residual(self, x: Sequence[float] | np.ndarray, tol: Optional[float] = None) -> float:
        """<Ax, p(x)>; vanishes by invariance of rho under the free flow."""
        arr = self._system.check_state(as_array(x))
        p = self.rho_gradient(arr, tol)
        return float(p @ (self._system.A @ arr))

    def rho_rate(self, x: Sequence[float] | np.ndarray, u: float, tol: Optional[float] = None) -> float:
        """d rho / dt = <p(x), Ax + Bu> along the controlled flow."""
        arr = self._system.check_state(as_array(x))
        p = self.rho_gradient(arr, tol)
        return float(p @ (self._system.A @ arr + self._system.B * u))
