"""Minimum-time synthesis for one oscillator with omega = 1.

The switching curve is the chain of unit semicircles centred at
(2k + 1, 0): lower halves for x > 0, upper halves for x < 0. Above the
curve u = -1, below it u = +1. Under constant u the state turns
clockwise around (u, 0) at unit angular speed, so every arc is solved
in closed form and only the curve crossings need a root search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from oscsteer.errors import NoConvergence, NotToyCase, ValidationError
from oscsteer.models.system import OscillatorSystem, as_array

_SCAN_POINTS = 8192
_MAX_ARCS = 100000


def switching_curve(x: np.ndarray | float) -> np.ndarray | float:
    """w(x): lower semicircles for x > 0, mirrored upper ones for x < 0."""
    ax = np.abs(x)
    centre = 2.0 * np.floor(ax / 2.0) + 1.0
    lower = -np.sqrt(np.clip(1.0 - (ax - centre) ** 2, 0.0, None))
    return np.where(np.asarray(x) >= 0.0, lower, -lower)


def switching_value(x: np.ndarray | float, y: np.ndarray | float) -> np.ndarray | float:
    """sigma = y - w(x); positive above the curve."""
    return y - switching_curve(x)


def _arc(x: float, y: float, u: float, t: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
    """State after time t under constant u, starting from (x, y)."""
    c, s = np.cos(t), np.sin(t)
    dx = x - u
    return u + dx * c + y * s, -dx * s + y * c


def _final_arc_time(x: float, y: float) -> float:
    """Time along the last semicircle to the origin."""
    if x >= 0.0:
        return math.pi - math.atan2(max(-y, 0.0), x - 1.0)
    return math.atan2(max(y, 0.0), x + 1.0)


@dataclass(frozen=True)
class BangArc:
    u: float
    duration: float


@dataclass(frozen=True)
class OptimalSynthesis:
    """Minimum time and the bang-bang arcs that realize it."""
    time: float
    arcs: list[BangArc] = field(default_factory=list)

    @property
    def switches(self) -> int:
        return max(0, len(self.arcs) - 1)


def _on_final_arc(x: float, y: float, tol: float) -> bool:
    if abs(float(switching_value(x, y))) > tol:
        return False
    return -2.0 - tol <= x <= 2.0 + tol


def optimal_synthesis(x0: Sequence[float] | np.ndarray, tol: float = 1e-12) -> OptimalSynthesis:
    """Follow the switching-curve feedback from x0 to the origin."""
    x, y = (float(v) for v in as_array(x0))
    scale = max(1.0, math.hypot(x, y))
    arcs: list[BangArc] = []
    total = 0.0
    grid = np.linspace(0.0, 2.0 * math.pi, _SCAN_POINTS + 1)[1:]
    for _ in range(_MAX_ARCS):
        if math.hypot(x, y) <= tol * scale:
            return OptimalSynthesis(total, arcs)
        if _on_final_arc(x, y, tol * scale):
            u = 1.0 if x > 0.0 or (x == 0.0 and y < 0.0) else -1.0
            duration = _final_arc_time(x, y)
            arcs.append(BangArc(u, duration))
            return OptimalSynthesis(total + duration, arcs)
        sigma0 = float(switching_value(x, y))
        if abs(sigma0) <= tol * scale:
            u = 1.0 if x > 0.0 else -1.0
        else:
            u = -1.0 if sigma0 > 0.0 else 1.0
        xs, ys = _arc(x, y, u, grid)
        sig = switching_value(xs, ys)
        live = np.sign(sig)
        start = live[0] if live[0] != 0.0 else -u
        flips = np.flatnonzero(live[1:] != start) + 1
        if flips.size == 0:
            raise NoConvergence(f"arc from ({x}, {y}) with u={u} never meets the switching curve")
        i = int(flips[0])
        if sig[i] == 0.0:
            hit = float(grid[i])
        else:
            hit = optimize.brentq(
                lambda t: float(switching_value(*_arc(x, y, u, t))),
                float(grid[i - 1]), float(grid[i]), xtol=1e-15, rtol=4.0 * np.finfo(float).eps,
            )
        arcs.append(BangArc(u, hit))
        total += hit
        nx, ny = _arc(x, y, u, hit)
        x, y = float(nx), float(ny)
    raise NoConvergence(f"synthesis exceeded {_MAX_ARCS} arcs")


def replay(x0: Sequence[float] | np.ndarray, arcs: Sequence[BangArc]) -> np.ndarray:
    """Exact end state of the arc sequence started at x0."""
    x, y = (float(v) for v in as_array(x0))
    for arc in arcs:
        if abs(arc.u) > 1.0:
            raise ValidationError("u", f"inadmissible control {arc.u}")
        nx, ny = _arc(x, y, arc.u, arc.duration)
        x, y = float(nx), float(ny)
    return np.array([x, y])


def optimal_time_n1(system: OscillatorSystem, x: Sequence[float] | np.ndarray, tol: float = 1e-12) -> float:
    """Minimum time to the origin for n = 1, omega = 1."""
    if system.n != 1 or system.omega[0] != 1.0:
        raise NotToyCase(f"the oracle covers one oscillator with omega = 1, got omega = {list(system.omega)}")
    return optimal_synthesis(system.check_state(as_array(x)), tol).time
