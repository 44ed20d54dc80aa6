"""Finite-horizon reachable-set support function, resonance scan and
limit-shape sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from oscsteer.errors import ValidationError
from oscsteer.geometry.support import SupportGeometry
from oscsteer.models.system import OscillatorSystem, as_array, z_of_momentum
from oscsteer.policy.resolver import QuadraturePolicy

_BISECTION_STEPS = 64
_RESONANCE_BLOCK = 1 << 20


def _switching_function(system: OscillatorSystem, p: np.ndarray):
    """g(t) = <B, exp(A^T t) p> and an antiderivative G with G' = g."""
    w = system.omega_array
    xi, eta = p[0::2], p[1::2]

    def g(t: np.ndarray) -> np.ndarray:
        wt = np.multiply.outer(t, w)
        return np.cos(wt) @ eta + np.sin(wt) @ (xi / w)

    def big_g(t: np.ndarray) -> np.ndarray:
        wt = np.multiply.outer(t, w)
        return np.sin(wt) @ (eta / w) - np.cos(wt) @ (xi / w ** 2)

    slope = float(np.sum(np.abs(eta) * w + np.abs(xi)))
    return g, big_g, slope


def support_reachable_finite(system: OscillatorSystem, p: Sequence[float] | np.ndarray, T: float,
                             policy: QuadraturePolicy, tol: float = 1e-12) -> float:
    """H of the time-T reachable set at p: integral_0^T |g(t)| dt.

    Zeros of g are isolated on a grid refined wherever a pair of sign
    changes could hide between nodes; between zeros g is integrated
    through its antiderivative.
    """
    if T < 0:
        raise ValidationError("T", "horizon must be nonnegative")
    arr = system.check_state(as_array(p), "p")
    if T == 0.0 or not np.any(arr):
        return 0.0
    g, big_g, slope = _switching_function(system, arr)
    period = 2.0 * math.pi / float(system.omega_array.max())
    count = max(2, int(math.ceil(T / period * policy.finite_support_nodes_per_period)) + 1)
    grid = np.linspace(0.0, T, count)
    for _ in range(policy.finite_support_refine_depth):
        values = g(grid)
        gaps = np.diff(grid)
        same_sign = values[:-1] * values[1:] > 0.0
        suspicious = same_sign & (np.abs(values[:-1]) + np.abs(values[1:]) <= slope * gaps)
        if not np.any(suspicious):
            break
        idx = np.flatnonzero(suspicious)
        fill = grid[idx, None] + gaps[idx, None] * (np.arange(1, 8) / 8.0)[None, :]
        grid = np.sort(np.concatenate([grid, fill.reshape(-1)]))
    values = g(grid)
    change = np.flatnonzero(values[:-1] * values[1:] < 0.0)
    lo, hi = grid[change].copy(), grid[change + 1].copy()
    g_lo = values[change].copy()
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        left = g_lo * g_mid <= 0.0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        g_lo = np.where(left, g_lo, g_mid)
        if np.all(hi - lo <= tol * max(T, 1.0)):
            break
    roots = 0.5 * (lo + hi)
    # exact zeros sitting on grid nodes split intervals too
    exact = grid[values == 0.0]
    points = np.unique(np.concatenate([[0.0], roots, exact, [T]]))
    return float(np.sum(np.abs(np.diff(big_g(points)))))


def limit_support(system: OscillatorSystem, geometry: SupportGeometry, p: Sequence[float] | np.ndarray) -> float:
    """H(p) = h(z(p)), the support function of the limit shape."""
    return geometry.h_support(z_of_momentum(system, as_array(p)))


def limit_shape_sample(system: OscillatorSystem, geometry: SupportGeometry,
                       directions: np.ndarray) -> np.ndarray:
    """Boundary points x = dH/dp of the limit shape for each row of directions."""
    out = []
    w2 = system.omega_sq
    for p in np.atleast_2d(np.asarray(directions, dtype=float)):
        z = z_of_momentum(system, p)
        grad = geometry.h_gradient(z)
        safe = np.where(z > 0.0, z, 1.0)
        scale = np.where(z > 0.0, grad / safe, 0.0)
        point = np.empty_like(p)
        point[0::2] = scale * p[0::2] / w2
        point[1::2] = scale * p[1::2]
        out.append(point)
    return np.array(out)


@dataclass(frozen=True)
class ResonanceReport:
    """Smallest |sum m_i omega_i| over integer m with 0 < |m|_inf <= max_coeff."""
    resonant: bool
    min_value: float
    witness: Optional[tuple[int, ...]]
    max_coeff: int
    tol: float

    def to_dict(self) -> dict:
        return {
            "resonant": self.resonant,
            "min_value": self.min_value,
            "witness": list(self.witness) if self.witness is not None else None,
            "max_coeff": self.max_coeff,
            "tol": self.tol,
        }


def resonance_check(omega: Sequence[float], max_coeff: int, tol: float) -> ResonanceReport:
    """Advisory scan for integer relations among the frequencies."""
    w = np.asarray(omega, dtype=float)
    n = w.size
    if max_coeff < 1:
        return ResonanceReport(False, math.inf, None, max_coeff, tol)
    coeffs = np.arange(-max_coeff, max_coeff + 1)
    block_axes = 1
    while block_axes < n and coeffs.size ** (block_axes + 1) <= _RESONANCE_BLOCK:
        block_axes += 1
    lead = n - block_axes
    grids = np.meshgrid(*([coeffs] * block_axes), indexing="ij")
    block = np.stack([g.reshape(-1) for g in grids], axis=1)
    base = block @ w[lead:]
    best_value, best_witness, best_norm = math.inf, None, math.inf
    for lead_idx in itertools.product(coeffs, repeat=lead):
        m = np.concatenate([np.tile(np.asarray(lead_idx, dtype=int), (block.shape[0], 1)), block], axis=1)
        values = np.abs(base + float(np.dot(lead_idx, w[:lead])) if lead else base)
        nonzero = np.any(m != 0, axis=1)
        first = m[np.arange(m.shape[0]), np.argmax(m != 0, axis=1)]
        keep = nonzero & (first > 0)
        if not np.any(keep):
            continue
        cand = np.flatnonzero(keep)
        norms = np.max(np.abs(m[cand]), axis=1)
        order = np.lexsort((norms, values[cand]))
        pick = cand[order[0]]
        value, norm = float(values[pick]), int(norms[order[0]])
        if value < best_value or (value == best_value and norm < best_norm):
            best_value, best_norm = value, norm
            best_witness = tuple(int(v) for v in m[pick])
    return ResonanceReport(best_value < tol, best_value, best_witness, max_coeff, tol)
