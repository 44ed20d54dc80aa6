"""Terminal-stage feedback on the canonical chain.

The time scale Tfrak(xfrak) > 0 is the unique root of

    <Q delta(Tfrak) xfrak, delta(Tfrak) xfrak> = kappa^2,
    delta(s) = diag(s^-1, s^-2, ..., s^-2n),

and the control is ufrak = Cfrak delta(Tfrak) xfrak with Cfrak = -Bfrak^T Q / 2.
Along the closed loop dTfrak/dt = -1 for every starting point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import sympy
from scipy import optimize

from oscsteer.canonical.brunovsky import CanonicalTransform, canonical_pair
from oscsteer.errors import NoBracket, ValidationError, ZeroState
from oscsteer.models.system import as_array
from oscsteer.policy.resolver import NumericsResolver, TerminalPolicy
from oscsteer.terminal.lyapunov import gram_matrix, lyapunov_matrix

logger = logging.getLogger(__name__)


def default_kappa(dim: int) -> float:
    """kappa = 1 / sqrt(dim (dim + 1)), so that |ufrak| <= 1/2."""
    return 1.0 / math.sqrt(dim * (dim + 1))


@dataclass(frozen=True)
class TimeScale:
    value: float
    log_residual: float
    evaluations: int


@dataclass(frozen=True, eq=False)
class TerminalController:
    """Q, Cfrak and kappa for one canonical dimension."""
    dim: int
    Q: np.ndarray
    Q_exact: sympy.ImmutableMatrix
    q: np.ndarray
    C_frak: np.ndarray
    kappa: float
    policy: TerminalPolicy

    @classmethod
    def build(cls, dim: int, policy: TerminalPolicy, kappa: Optional[float] = None) -> TerminalController:
        if dim < 1 or dim > policy.max_dim:
            raise ValidationError("dim", f"terminal stage supports 1 <= dim <= {policy.max_dim}, got {dim}")
        kappa = default_kappa(dim) if kappa is None else float(kappa)
        if not kappa > 0.0:
            raise ValidationError("kappa", "must be positive")
        exact = lyapunov_matrix(dim)
        big_q = np.array(exact.tolist(), dtype=float)
        return cls(
            dim=dim,
            Q=big_q,
            Q_exact=exact,
            q=np.array(gram_matrix(dim).tolist(), dtype=float),
            C_frak=-0.5 * big_q[0, :].copy(),
            kappa=kappa,
            policy=policy,
        )

    @classmethod
    def from_resolver(cls, dim: int, resolver: NumericsResolver) -> TerminalController:
        return cls.build(dim, resolver.terminal())

    @property
    def control_bound(self) -> float:
        """(kappa / 2) sqrt(Q_11), the Cauchy-Schwarz bound on |ufrak|."""
        return 0.5 * self.kappa * math.sqrt(self.Q[0, 0])

    # ------------------------------------------------------------------

    def _scaled(self, xf: np.ndarray, log_t: float) -> tuple[np.ndarray, float]:
        """delta(e^log_t) xf as (unit-max vector, log of its max entry)."""
        powers = np.arange(1, self.dim + 1)
        live = xf != 0.0
        logs = np.full(self.dim, -np.inf)
        logs[live] = np.log(np.abs(xf[live])) - powers[live] * log_t
        top = float(np.max(logs))
        unit = np.sign(xf) * np.exp(logs - top)
        return unit, top

    def _log_excess(self, xf: np.ndarray, log_t: float) -> float:
        unit, top = self._scaled(xf, log_t)
        return 2.0 * top + math.log(float(unit @ self.Q @ unit)) - 2.0 * math.log(self.kappa)

    def _check(self, xf: np.ndarray) -> np.ndarray:
        arr = as_array(xf)
        if arr.size != self.dim:
            raise ValidationError("xfrak", f"expected {self.dim} components, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("xfrak", "components must be finite")
        if not np.any(arr):
            raise ZeroState("time scale is undefined at the origin")
        return arr

    def time_scale(self, xf: np.ndarray, rtol: Optional[float] = None) -> TimeScale:
        """Root of <Q delta(T) xf, delta(T) xf> = kappa^2, solved in log T.

        The left side is strictly decreasing in T, so doubling brackets
        from the guess max |xf_i|^(1/i) always close.
        """
        arr = self._check(xf)
        rtol = self.policy.time_scale_rtol if rtol is None else rtol
        calls = [0]

        def f(log_t: float) -> float:
            calls[0] += 1
            return self._log_excess(arr, log_t)

        powers = np.arange(1, self.dim + 1)
        live = arr != 0.0
        guess = float(np.max(np.log(np.abs(arr[live])) / powers[live]))
        step = math.log(2.0)
        budget = self.policy.max_bracket_steps
        if f(guess) >= 0.0:
            lo, hi = guess, guess + step
            while f(hi) >= 0.0:
                lo, hi = hi, hi + step
                budget -= 1
                if budget <= 0:
                    raise NoBracket(f"time scale not bracketed after {self.policy.max_bracket_steps} doublings")
        else:
            lo, hi = guess - step, guess
            while f(lo) < 0.0:
                lo, hi = lo - step, lo
                budget -= 1
                if budget <= 0:
                    raise NoBracket(f"time scale not bracketed after {self.policy.max_bracket_steps} doublings")
        f_lo = f(lo)
        if f_lo == 0.0:
            root = lo
        else:
            root = optimize.brentq(f, lo, hi, xtol=rtol, rtol=4.0 * np.finfo(float).eps, maxiter=400)
        return TimeScale(math.exp(root), abs(f(root)), calls[0])

    def control_canonical(self, xf: np.ndarray) -> float:
        """ufrak = Cfrak delta(Tfrak) xfrak."""
        arr = self._check(xf)
        scale = self.time_scale(arr)
        unit, top = self._scaled(arr, math.log(scale.value))
        return float(self.C_frak @ unit) * math.exp(top)

    def rhs_canonical(self, xf: np.ndarray) -> np.ndarray:
        """Closed-loop canonical vector field Afrak xfrak + Bfrak ufrak."""
        a_frak, b_frak = canonical_pair(self.dim)
        arr = as_array(xf)
        if not np.any(arr):
            return np.zeros(self.dim)
        return a_frak @ arr + b_frak * self.control_canonical(arr)


def solve_time_scale(controller: TerminalController, xf: np.ndarray, rtol: Optional[float] = None) -> float:
    return controller.time_scale(xf, rtol).value


def terminal_control_canonical(controller: TerminalController, xf: np.ndarray) -> float:
    return controller.control_canonical(xf)


def terminal_control_physical(controller: TerminalController, transform: CanonicalTransform,
                              x: np.ndarray) -> float:
    """u = C x + ufrak(D^-1 x); zero at the origin."""
    arr = as_array(x)
    if not np.any(arr):
        return 0.0
    return float(transform.C @ arr) + controller.control_canonical(transform.to_canonical(arr))


def time_to_go(controller: TerminalController, transform: CanonicalTransform, x: np.ndarray) -> float:
    """Tfrak(D^-1 x), the remaining terminal time; zero at the origin."""
    arr = as_array(x)
    if not np.any(arr):
        return 0.0
    return controller.time_scale(transform.to_canonical(arr)).value


@dataclass(frozen=True, eq=False)
class ClosedLoopRun:
    """Canonical closed-loop samples (t, Tfrak(t), ufrak(t))."""
    t: np.ndarray
    tfrak: np.ndarray
    control: np.ndarray

    def regression(self) -> tuple[float, float]:
        """Least-squares slope and the largest deviation from T0 - t."""
        slope = float(np.polyfit(self.t, self.tfrak, 1)[0])
        deviation = float(np.max(np.abs(self.tfrak - (self.tfrak[0] - self.t))))
        return slope, deviation


def run_canonical(controller: TerminalController, xf0: np.ndarray, fraction: float = 0.9,
                  steps_per_tfrak: int = 200) -> ClosedLoopRun:
    """Integrate the canonical closed loop with RK4 until Tfrak has shrunk by fraction."""
    x = controller._check(xf0).copy()
    t0 = controller.time_scale(x).value
    t_end = fraction * t0
    h = t0 / steps_per_tfrak
    ts, tfraks, controls = [0.0], [t0], [controller.control_canonical(x)]
    t = 0.0
    while t < t_end - 1e-15 * t0:
        step = min(h, t_end - t)
        k1 = controller.rhs_canonical(x)
        k2 = controller.rhs_canonical(x + 0.5 * step * k1)
        k3 = controller.rhs_canonical(x + 0.5 * step * k2)
        k4 = controller.rhs_canonical(x + step * k3)
        x = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += step
        ts.append(t)
        tfraks.append(controller.time_scale(x).value)
        controls.append(controller.control_canonical(x))
    logger.debug("canonical closed loop: %d steps from Tfrak=%.6g", len(ts) - 1, t0)
    return ClosedLoopRun(np.array(ts), np.array(tfraks), np.array(controls))
