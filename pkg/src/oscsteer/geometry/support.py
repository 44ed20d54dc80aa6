"""Support function h(z) of the limit shape and its derivatives.

    h(z) = mean over the n-torus of |sum_i z_i cos(phi_i)|

Evaluation paths:
- n = 1: closed form (2/pi)|z|.
- n = 2: complete elliptic integrals (scipy.special.ellipk/ellipe, parameter m).
- torus: tensor midpoint rule over n - 1 angles with the largest
  component integrated exactly; Monte Carlo for large n.
- bessel: (2/pi) * integral_0^inf (1 - prod J0(z_i t)) t^-2 dt with
  Gauss-Legendre panels, the analytic 1/Lambda tail and the leading
  asymptotic correction of the oscillatory product tail.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from oscsteer.errors import (
    DimensionMismatch,
    QuadratureNotConverged,
    SingularLocus,
    ValidationError,
    ZeroVector,
)
from oscsteer.models.system import SingularLocusFlag
from oscsteer.policy.resolver import GeometryPolicy, NumericsResolver, QuadraturePolicy

logger = logging.getLogger(__name__)

TWO_OVER_PI = 2.0 / math.pi
FOUR_OVER_PI2 = 4.0 / math.pi ** 2

# Bessel prefactor as printed versus the value fixed by the n = 1 closed form.
PRINTED_BESSEL_PREFACTOR = 1.0 / math.pi
BESSEL_PREFACTOR = 2.0 / math.pi

_MAX_GRID_POINTS = 1 << 24
_CHUNK_POINTS = 1 << 20
_MAX_BESSEL_NODES = 1 << 23
_SMALL_M = 1e-8


class SupportMethod(str, enum.Enum):
    """Evaluation path for h(z)."""
    TORUS = "torus"
    BESSEL = "bessel"
    ELLIPTIC2 = "elliptic2"
    AUTO = "auto"


class HessianBackend(str, enum.Enum):
    FINITE_DIFFERENCE = "finite_difference"
    ELLIPTIC = "elliptic"


@dataclass(frozen=True)
class SupportEstimate:
    """A value of h together with how it was obtained."""
    value: float
    error: float
    method: SupportMethod
    evaluations: int


@dataclass(frozen=True)
class HessianForm:
    """<d2h/dz2 xi, xi> and the backend that produced it."""
    value: float
    backend: HessianBackend


# ----------------------------------------------------------------------
# Elliptic closed forms (n = 2)
# ----------------------------------------------------------------------

def _ordered_pair(z1: float, z2: float) -> tuple[float, float, float]:
    a, b = abs(z1), abs(z2)
    m = (a / b) ** 2 if b > 0 else 0.0
    return a, b, min(m, 1.0)


def _one_minus_m_k(m: float) -> float:
    if m >= 1.0:
        return 0.0
    return (1.0 - m) * float(special.ellipk(m))


def elliptic2_value(a: float, b: float) -> float:
    """h for 0 <= a <= b, including the limit a = b."""
    if b == 0.0:
        return 0.0
    m = min((a / b) ** 2, 1.0)
    return FOUR_OVER_PI2 * b * (2.0 * float(special.ellipe(m)) - _one_minus_m_k(m))


def _e_minus_kc_over_m(m: float) -> float:
    """(E(m) - (1 - m) K(m)) / m, finite at m = 0."""
    if m < _SMALL_M:
        return 0.25 * math.pi * (1.0 + m / 8.0)
    return (float(special.ellipe(m)) - _one_minus_m_k(m)) / m


def _k_minus_e_over_m(m: float) -> float:
    if m < _SMALL_M:
        return 0.25 * math.pi * (1.0 + 3.0 * m / 8.0)
    if m >= 1.0:
        return math.inf
    return (float(special.ellipk(m)) - float(special.ellipe(m))) / m


def elliptic2_gradient(z: np.ndarray) -> np.ndarray:
    """Gradient for n = 2; continuous across |z1| = |z2|."""
    swap = abs(z[0]) > abs(z[1])
    small, large = (z[1], z[0]) if swap else (z[0], z[1])
    a, b, m = _ordered_pair(small, large)
    if b == 0.0:
        raise ZeroVector("gradient of h is undefined at z = 0")
    g_large = FOUR_OVER_PI2 * float(special.ellipe(m))
    # (E - (1-m)K) * b / a written through m = (a/b)^2 so a = 0 is regular.
    g_small = FOUR_OVER_PI2 * _e_minus_kc_over_m(m) * a / b
    g_small = math.copysign(g_small, small) if a > 0 else 0.0
    g_large = math.copysign(g_large, large)
    return np.array([g_large, g_small]) if swap else np.array([g_small, g_large])


def h_elliptic2(z1: float, z2: float, rel_tol: float = 1e-9) -> float:
    """h(z1, z2) = (4|z2|/pi^2)(2E(m) - (1 - m)K(m)), m = (z1/z2)^2.

    Requires |z1| <= |z2| and rejects the locus |z1| = |z2|.
    """
    a, b = abs(z1), abs(z2)
    if a > b * (1.0 + rel_tol):
        raise ValidationError("z1", "|z1| must not exceed |z2|")
    if b == 0.0:
        return 0.0
    if b - a <= rel_tol * b:
        raise SingularLocus(f"|z1| = |z2| = {b}", witness=(0, 1))
    return elliptic2_value(a, b)


def h_elliptic2_printed(z1: float, z2: float) -> float:
    """The printed one-dimensional form (4|z2|/pi^2)(1 - m)K(m).

    Kept for the discrepancy record; it is not the support function.
    """
    a, b = abs(z1), abs(z2)
    if b == 0.0:
        return 0.0
    m = min((a / b) ** 2, 1.0)
    return FOUR_OVER_PI2 * b * _one_minus_m_k(m)


# ----------------------------------------------------------------------
# Singular locus
# ----------------------------------------------------------------------

def singular_locus(z: Sequence[float], rel_tol: float = 1e-9) -> SingularLocusFlag:
    """Flag z_i = +-z_j with every other component zero."""
    arr = np.abs(np.asarray(z, dtype=float))
    top = float(arr.max()) if arr.size else 0.0
    if top == 0.0:
        return SingularLocusFlag(False)
    live = np.flatnonzero(arr > rel_tol * top)
    if live.size != 2:
        return SingularLocusFlag(False)
    i, j = int(live[0]), int(live[1])
    if abs(arr[i] - arr[j]) <= rel_tol * top:
        return SingularLocusFlag(True, (i, j))
    return SingularLocusFlag(False)


# ----------------------------------------------------------------------
# Torus quadrature
# ----------------------------------------------------------------------

def _inner_mean(c: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact mean over one angle b of |c + r cos b| and its c/r derivatives."""
    inside = np.abs(c) <= r
    ratio = np.clip(c / r, -1.0, 1.0)
    root = np.sqrt(np.maximum(r * r - c * c, 0.0))
    value = np.where(inside, TWO_OVER_PI * (root + c * np.arcsin(ratio)), np.abs(c))
    d_c = np.where(inside, TWO_OVER_PI * np.arcsin(ratio), np.sign(c))
    d_r = np.where(inside, TWO_OVER_PI * root / r, 0.0)
    return value, d_c, d_r


def _torus_pass(z: np.ndarray, nodes: int, want_grad: bool) -> tuple[float, np.ndarray, int]:
    """One midpoint pass with `nodes` nodes per reduced axis on [0, pi]."""
    n = z.size
    axis = int(np.argmax(z))
    r = float(z[axis])
    others = np.delete(np.arange(n), axis)
    w = z[others]
    grad = np.zeros(n)
    if others.size == 0:
        grad[axis] = TWO_OVER_PI
        return TWO_OVER_PI * r, grad, 1
    cos_nodes = np.cos((np.arange(nodes) + 0.5) * math.pi / nodes)
    m = others.size
    total = nodes ** m
    if total > _MAX_GRID_POINTS:
        raise QuadratureNotConverged(f"torus grid of {total} points exceeds budget")
    # leading axes are enumerated in python, the trailing block is vectorized
    block_axes = 1
    while block_axes < m and nodes ** (block_axes + 1) <= _CHUNK_POINTS:
        block_axes += 1
    lead = m - block_axes
    grids = np.meshgrid(*([cos_nodes] * block_axes), indexing="ij")
    block_cos = [g.reshape(-1) for g in grids]
    base = sum(w[lead + k] * block_cos[k] for k in range(block_axes))
    acc_value = 0.0
    acc_grad = np.zeros(n)
    for lead_idx in itertools.product(range(nodes), repeat=lead):
        shift = sum(w[k] * cos_nodes[i] for k, i in enumerate(lead_idx))
        c = base + shift
        value, d_c, d_r = _inner_mean(c, r)
        acc_value += float(value.sum())
        if want_grad:
            acc_grad[axis] += float(d_r.sum())
            for k in range(m):
                if k < lead:
                    acc_grad[others[k]] += float(d_c.sum()) * cos_nodes[lead_idx[k]]
                else:
                    acc_grad[others[k]] += float(d_c @ block_cos[k - lead])
    return acc_value / total, acc_grad / total, total


def _monte_carlo(z: np.ndarray, policy: QuadraturePolicy, want_grad: bool) -> tuple[float, float, np.ndarray, int]:
    n = z.size
    axis = int(np.argmax(z))
    r = float(z[axis])
    others = np.delete(np.arange(n), axis)
    w = z[others]
    rng = np.random.default_rng(policy.monte_carlo_seed)
    s1 = s2 = 0.0
    grad = np.zeros(n)
    done = 0
    while done < policy.monte_carlo_samples:
        batch = min(policy.monte_carlo_batch, policy.monte_carlo_samples - done)
        cosines = np.cos(rng.uniform(0.0, math.pi, size=(batch, others.size)))
        c = cosines @ w
        value, d_c, d_r = _inner_mean(c, r)
        s1 += float(value.sum())
        s2 += float((value * value).sum())
        if want_grad:
            grad[axis] += float(d_r.sum())
            grad[others] += d_c @ cosines
        done += batch
    mean = s1 / done
    var = max(s2 / done - mean * mean, 0.0)
    return mean, math.sqrt(var / done), grad / done, done


# ----------------------------------------------------------------------
# Bessel representation
# ----------------------------------------------------------------------

def _oscillatory_tail(z: np.ndarray, phases: np.ndarray, power: float, lam: float) -> float:
    """Leading term of integral_lam^inf prod J_k(z_i t) t^-power dt.

    Each factor is replaced by sqrt(2/(pi z t)) cos(z t + phase); the
    product of cosines splits into 2^n single frequencies.
    """
    n = z.size
    alpha = power + 0.5 * n
    scale = (2.0 / math.pi) ** (0.5 * n) / math.sqrt(float(np.prod(z))) / 2.0 ** n
    total = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=n):
        s = np.asarray(signs)
        omega = float(s @ z)
        phase = float(s @ phases)
        if abs(omega) * lam < 1.0:
            total += math.cos(omega * lam + phase) * lam ** (1.0 - alpha) / (alpha - 1.0)
        else:
            total += -math.sin(omega * lam + phase) * lam ** (-alpha) / omega
    return scale * total


class SupportGeometry:
    """Evaluates h, its gradient and Hessian form under a quadrature policy.

    Usage:
        geometry = SupportGeometry.from_resolver(resolver)
        geometry.h_support([1.0, 2.0])
    """

    def __init__(self, quadrature: QuadraturePolicy, policy: GeometryPolicy) -> None:
        self._quad = quadrature
        self._policy = policy

    @classmethod
    def from_resolver(cls, resolver: NumericsResolver) -> SupportGeometry:
        return cls(resolver.quadrature(), resolver.geometry())

    @property
    def policy(self) -> GeometryPolicy:
        return self._policy

    @property
    def quadrature(self) -> QuadraturePolicy:
        return self._quad

    @staticmethod
    def _as_z(z: Sequence[float]) -> np.ndarray:
        arr = np.asarray(z, dtype=float).reshape(-1)
        if arr.size == 0:
            raise DimensionMismatch("z must have at least one component")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("z", "components must be finite")
        return arr

    def singular(self, z: Sequence[float]) -> SingularLocusFlag:
        return singular_locus(z, self._policy.singular_rel_tol)

    # ------------------------------------------------------------------
    # Value
    # ------------------------------------------------------------------

    def h_support(self, z: Sequence[float], method: SupportMethod | str = SupportMethod.AUTO,
                  tol: Optional[float] = None) -> float:
        """h(z) with relative error at most tol."""
        return self.h_support_estimate(z, method, tol).value

    def h_support_estimate(self, z: Sequence[float], method: SupportMethod | str = SupportMethod.AUTO,
                           tol: Optional[float] = None) -> SupportEstimate:
        method = SupportMethod(method)
        tol = self._policy.default_tol if tol is None else tol
        arr = np.abs(self._as_z(z))
        n = arr.size
        if not np.any(arr):
            return SupportEstimate(0.0, 0.0, method, 0)
        if method is SupportMethod.ELLIPTIC2:
            if n != 2:
                raise DimensionMismatch(f"elliptic2 needs n = 2, got n = {n}")
            a, b = sorted(arr)
            return SupportEstimate(h_elliptic2(a, b, self._policy.singular_rel_tol), 0.0, method, 1)
        if method is SupportMethod.AUTO:
            if n == 1:
                return SupportEstimate(TWO_OVER_PI * float(arr[0]), 0.0, method, 1)
            if n == 2:
                a, b = sorted(arr)
                return SupportEstimate(elliptic2_value(a, b), 0.0, method, 1)
            method = SupportMethod.BESSEL
        if method is SupportMethod.BESSEL:
            value, error, evals = self._bessel(arr, None, tol, derivative=None)
            return SupportEstimate(value, error, method, evals)
        value, error, _, evals = self._torus(arr, tol, want_grad=False)
        return SupportEstimate(value, error, SupportMethod.TORUS, evals)

    def _torus(self, z: np.ndarray, tol: float, want_grad: bool) -> tuple[float, float, np.ndarray, int]:
        n = z.size
        if n >= self._quad.monte_carlo_min_n:
            value, stderr, grad, evals = _monte_carlo(z, self._quad, want_grad)
            if 3.0 * stderr > tol * value:
                raise QuadratureNotConverged(
                    f"Monte Carlo standard error {stderr:.3e} above tolerance", value, stderr
                )
            return value, stderr, grad, evals
        if n == 1:
            value, grad, evals = _torus_pass(z, 1, want_grad)
            return value, 0.0, grad, evals
        nodes = self._quad.torus_start_nodes(n)
        value, grad, evals = _torus_pass(z, nodes, want_grad)
        error = math.inf
        for _ in range(self._quad.torus_max_doublings):
            nodes *= 2
            try:
                refined, refined_grad, count = _torus_pass(z, nodes, want_grad)
            except QuadratureNotConverged:
                break
            evals += count
            error = abs(refined - value)
            grad_error = float(np.max(np.abs(refined_grad - grad))) if want_grad else 0.0
            value, grad = refined, refined_grad
            if error <= tol * value and grad_error <= tol * max(1.0, float(np.max(np.abs(grad)))):
                return value, error, grad, evals
        raise QuadratureNotConverged(
            f"torus quadrature for n={n} stalled at error {error:.3e}", value, error
        )

    def _bessel(self, z: np.ndarray, truncation: Optional[float], tol: float,
                derivative: Optional[int]) -> tuple[float, float, int]:
        """Bessel integral for the value (derivative None) or d/dz_k."""
        live = z[z > 0.0]
        if derivative is not None and z[derivative] == 0.0:
            return 0.0, 0.0, 0
        if derivative is not None:
            k = int(np.flatnonzero(np.flatnonzero(z > 0.0) == derivative)[0])
        zmin = float(live.min())
        lam = truncation if truncation is not None else self._quad.bessel_truncation_factor / zmin
        # panel width resolves the fastest combined frequency sum(z)
        width = math.pi / float(live.sum())
        panels = max(1, int(math.ceil(lam / width)))
        order = self._quad.bessel_panel_nodes
        if panels * order > _MAX_BESSEL_NODES:
            panels = _MAX_BESSEL_NODES // order
            lam = panels * width
            logger.debug("bessel truncation reduced to %.6g by node budget", lam)
        width = lam / panels

        def integrate(nodes_per_panel: int) -> float:
            x, wts = np.polynomial.legendre.leggauss(nodes_per_panel)
            total = 0.0
            step = max(1, _CHUNK_POINTS // nodes_per_panel)
            for start in range(0, panels, step):
                left = width * np.arange(start, min(panels, start + step))
                t = (left[:, None] + 0.5 * width * (x[None, :] + 1.0)).reshape(-1)
                args = np.outer(live, t)
                j0 = special.j0(args)
                if derivative is None:
                    f = (1.0 - np.prod(j0, axis=0)) / (t * t)
                else:
                    others = np.prod(np.delete(j0, k, axis=0), axis=0)
                    f = special.j1(args[k]) * others / t
                total += float((f.reshape(-1, nodes_per_panel) @ wts).sum()) * 0.5 * width
            return total

        main = integrate(order)
        coarse = integrate(max(4, order - 8))
        if derivative is None:
            phases = np.full(live.size, -0.25 * math.pi)
            tail = _oscillatory_tail(live, phases, 2.0, lam)
            value = main + 1.0 / lam - tail
        else:
            phases = np.full(live.size, -0.25 * math.pi)
            phases[k] = -0.75 * math.pi
            tail = _oscillatory_tail(live, phases, 1.0, lam)
            value = main + tail
        # next asymptotic order is smaller than the leading one by ~1/(zmin*lam)
        error = abs(main - coarse) + abs(tail) / (zmin * lam) + 1e-15 * abs(main)
        value *= BESSEL_PREFACTOR
        error *= BESSEL_PREFACTOR
        # |dh/dz_k| <= 1; same absolute floor as the torus path
        scale = abs(value) if derivative is None else max(abs(value), 1.0)
        if error > tol * max(scale, 1e-300):
            what = "value" if derivative is None else f"d/dz_{derivative}"
            raise QuadratureNotConverged(
                f"bessel quadrature error {error:.3e} for {what} above tolerance", value, error
            )
        return value, error, 2 * panels * order

    def h_bessel(self, z: Sequence[float], truncation: Optional[float] = None,
                 tol: Optional[float] = None) -> float:
        """Bessel representation with the calibrated prefactor 2/pi."""
        tol = self._policy.default_tol if tol is None else tol
        arr = np.abs(self._as_z(z))
        if not np.any(arr):
            return 0.0
        return self._bessel(arr, truncation, tol, derivative=None)[0]

    # ------------------------------------------------------------------
    # Derivatives
    # ------------------------------------------------------------------

    def h_gradient(self, z: Sequence[float], tol: Optional[float] = None,
                   method: SupportMethod | str = SupportMethod.AUTO) -> np.ndarray:
        """Gradient of h; component i is zero when z_i = 0."""
        method = SupportMethod(method)
        tol = self._policy.default_tol if tol is None else tol
        arr = self._as_z(z)
        if not np.any(arr):
            raise ZeroVector("gradient of h is undefined at z = 0")
        n = arr.size
        signs = np.where(arr < 0.0, -1.0, 1.0)
        mag = np.abs(arr)
        if n == 1:
            return np.array([TWO_OVER_PI * signs[0]])
        if n == 2 and method in (SupportMethod.AUTO, SupportMethod.ELLIPTIC2):
            return elliptic2_gradient(arr)
        if method is SupportMethod.TORUS:
            grad = self._torus(mag, tol, want_grad=True)[2]
        else:
            grad = np.array([self._bessel(mag, None, tol, derivative=i)[0] for i in range(n)])
        grad[mag == 0.0] = 0.0
        return grad * signs

    def h_hessian_form(self, z: Sequence[float], xi: Sequence[float], tol: Optional[float] = None,
                       backend: HessianBackend | str = HessianBackend.FINITE_DIFFERENCE) -> HessianForm:
        """<d2h/dz2(z) xi, xi>; infinite on the singular locus."""
        backend = HessianBackend(backend)
        arr = self._as_z(z)
        direction = np.asarray(xi, dtype=float).reshape(-1)
        if direction.size != arr.size:
            raise DimensionMismatch("xi and z differ in length")
        if not np.any(arr):
            raise ZeroVector("Hessian of h is undefined at z = 0")
        norm_xi = float(np.linalg.norm(direction))
        if norm_xi == 0.0:
            return HessianForm(0.0, backend)
        unit_z = arr / np.linalg.norm(arr)
        radial = abs(abs(float(unit_z @ direction)) - norm_xi) <= self._policy.singular_rel_tol * norm_xi
        flag = self.singular(arr)
        if flag.is_singular:
            if radial:
                return HessianForm(0.0, backend)
            raise SingularLocus(f"z = {arr.tolist()} lies on z_i = +-z_j", witness=flag.witness)
        if backend is HessianBackend.ELLIPTIC:
            if arr.size != 2:
                raise DimensionMismatch("elliptic Hessian backend needs n = 2")
            return HessianForm(self._elliptic_hessian(arr, direction), backend)
        h = self._policy.fd_step * float(np.linalg.norm(arr))
        unit = direction / norm_xi
        plus = self.h_gradient(arr + h * unit, tol)
        minus = self.h_gradient(arr - h * unit, tol)
        value = norm_xi * float((plus - minus) @ direction) / (2.0 * h)
        return HessianForm(value, backend)

    @staticmethod
    def _elliptic_hessian(z: np.ndarray, xi: np.ndarray) -> float:
        # work in the nonnegative orthant: H(Sz) = S H(z) S for sign flips S
        signs = np.where(z < 0.0, -1.0, 1.0)
        mag, d = np.abs(z), xi * signs
        small, large = (1, 0) if mag[0] > mag[1] else (0, 1)
        a, b, m = _ordered_pair(mag[small], mag[large])
        coef = _k_minus_e_over_m(m)
        return FOUR_OVER_PI2 * coef * (d[small] - d[large] * a / b) ** 2 / b
