"""Zone planning: terminal parameter Theta, middle amplitude U, the
standstill interval and the three-stage classifier.

The terminal zone is the ellipsoid

    G_Theta = {x : <Q delta(Theta) D^-1 x, delta(Theta) D^-1 x> <= 1},

sized so that |Cx| <= 1/2 on it, and U is chosen so that the ball of
radius U * r_switch fits inside G_Theta.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from oscsteer.canonical.brunovsky import CanonicalTransform
from oscsteer.errors import DegenerateC, NoBracket, ValidationError
from oscsteer.geometry.reachable import limit_support
from oscsteer.geometry.support import SupportGeometry
from oscsteer.models.system import OscillatorSystem, as_array
from oscsteer.policy.resolver import ZonesPolicy
from oscsteer.terminal.controller import TerminalController

logger = logging.getLogger(__name__)

STRIP_HALF_WIDTH = 0.5


class StageLabel(str, enum.Enum):
    HIGH = "high"
    MIDDLE = "middle"
    TERMINAL = "terminal"
    ARRIVED = "arrived"

    @property
    def rank(self) -> int:
        return _STAGE_ORDER.index(self)

    @property
    def number(self) -> int:
        """1, 2, 3 for the control stages; 4 once arrived."""
        return self.rank + 1


_STAGE_ORDER = (StageLabel.HIGH, StageLabel.MIDDLE, StageLabel.TERMINAL, StageLabel.ARRIVED)


class RadiusKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    RHO = "rho"


class TerminalEntry(str, enum.Enum):
    ELLIPSOID = "ellipsoid"
    TIME_SCALE = "time_scale"


@dataclass(frozen=True, eq=False)
class ZonePlan:
    """Theta, U and the physical quadratic form of G_Theta."""
    theta: float
    r_switch: float
    r_switch_kind: RadiusKind
    U: float
    lambda_in: float
    kappa: float
    zone_form: np.ndarray
    terminal_entry: TerminalEntry = TerminalEntry.ELLIPSOID

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "r_switch": self.r_switch,
            "r_switch_kind": self.r_switch_kind.value,
            "U": self.U,
            "lambda_in": self.lambda_in,
            "kappa": self.kappa,
            "terminal_entry": self.terminal_entry.value,
        }


def _delta(theta: float, dim: int) -> np.ndarray:
    return theta ** -np.arange(1.0, dim + 1.0)


def condition_b_vector(transform: CanonicalTransform) -> np.ndarray:
    """v = D^T C^T, so that Cx = <v, xfrak> for x = D xfrak."""
    return transform.D.T @ transform.C


def condition_b_value(theta: float, transform: CanonicalTransform, controller: TerminalController) -> float:
    """max of |Cx| over G_Theta: <q delta^-1 v, delta^-1 v>^(1/2)."""
    w = condition_b_vector(transform) / _delta(theta, transform.dim)
    return math.sqrt(max(float(w @ controller.q @ w), 0.0))


def theta_max(transform: CanonicalTransform, controller: TerminalController,
              policy: ZonesPolicy, tol: Optional[float] = None) -> float:
    """Largest Theta with condition_b_value <= 1/2.

    theta * d/dtheta of the squared value is <(M q + q M) w, w> > 0, so
    the constraint is strictly increasing and bisection in log Theta applies.
    """
    tol = policy.theta_rtol if tol is None else tol
    v = condition_b_vector(transform)
    if not np.any(v):
        raise DegenerateC("C D vanishes; condition B cannot bind")

    def excess(log_theta: float) -> float:
        value = condition_b_value(math.exp(log_theta), transform, controller)
        if value <= 0.0:
            return -math.inf
        return math.log(value) - math.log(STRIP_HALF_WIDTH)

    lo = hi = 0.0
    step = math.log(2.0)
    for _ in range(2000):
        if excess(lo) < 0.0:
            break
        lo -= step
    else:
        raise NoBracket("condition B has no lower bracket")
    for _ in range(2000):
        if excess(hi) > 0.0:
            break
        hi += step
    else:
        raise NoBracket("condition B has no upper bracket")
    root = optimize.bisect(excess, lo, hi, xtol=max(tol, 1e-15), rtol=4.0 * np.finfo(float).eps, maxiter=400)
    theta = math.exp(root)
    logger.debug("Theta = %.16g (|Cx| max %.3e)", theta, condition_b_value(theta, transform, controller))
    return theta


def zone_form(theta: float, transform: CanonicalTransform, controller: TerminalController) -> np.ndarray:
    """Physical matrix M with m(x) = x^T M x."""
    scaled = _delta(theta, transform.dim)[:, None] * transform.D_inv
    form = scaled.T @ controller.Q @ scaled
    return 0.5 * (form + form.T)


def _inscribed(form: np.ndarray) -> float:
    top = float(linalg.eigvalsh(form)[-1])
    return 1.0 / math.sqrt(top)


def amplitude_for(lambda_in: float, r_switch: float) -> float:
    """U = lambda_in / r_switch, clamped to (0, 1]."""
    if not r_switch > 0.0:
        raise ValidationError("r_switch", "must be positive")
    return min(1.0, lambda_in / r_switch)


def build_plan(system: OscillatorSystem, transform: CanonicalTransform, controller: TerminalController,
               policy: ZonesPolicy, r_switch: float, r_switch_kind: RadiusKind | str = RadiusKind.EUCLIDEAN,
               terminal_entry: TerminalEntry | str = TerminalEntry.ELLIPSOID,
               theta: Optional[float] = None, amplitude: Optional[float] = None) -> ZonePlan:
    """Assemble a plan; explicit theta or amplitude override the computed ones."""
    if transform.dim != system.dim or controller.dim != system.dim:
        raise ValidationError("plan", "transform, controller and system dimensions differ")
    theta = theta_max(transform, controller, policy) if theta is None else float(theta)
    if not theta > 0.0:
        raise ValidationError("theta", "must be positive")
    form = zone_form(theta, transform, controller)
    lam = _inscribed(form)
    u = amplitude_for(lam, r_switch) if amplitude is None else float(amplitude)
    if not 0.0 < u <= 1.0:
        raise ValidationError("U", f"must lie in (0, 1], got {u}")
    return ZonePlan(
        theta=theta,
        r_switch=float(r_switch),
        r_switch_kind=RadiusKind(r_switch_kind),
        U=u,
        lambda_in=lam,
        kappa=controller.kappa,
        zone_form=form,
        terminal_entry=TerminalEntry(terminal_entry),
    )


def zone_value(plan: ZonePlan, x: np.ndarray) -> float:
    arr = as_array(x)
    if arr.size != plan.zone_form.shape[0]:
        raise ValidationError("x", f"expected {plan.zone_form.shape[0]} components, got {arr.size}")
    return float(arr @ plan.zone_form @ arr)


def terminal_zone_contains(plan: ZonePlan, x: np.ndarray) -> tuple[bool, float]:
    """(m(x) <= 1, m(x)); the zone is closed."""
    m = zone_value(plan, x)
    return m <= 1.0, m


def inscribed_ball_radius(plan: ZonePlan) -> float:
    return _inscribed(plan.zone_form)


def amplitude_U(plan: ZonePlan) -> float:
    return plan.U


def standstill_interval(system: OscillatorSystem, amplitude: float) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints of the equilibria {-A^-1 B u : |u| <= U}: x_i = u / omega_i^2, y_i = 0."""
    if not 0.0 <= amplitude <= 1.0:
        raise ValidationError("U", f"must lie in [0, 1], got {amplitude}")
    point = np.zeros(system.dim)
    point[0::2] = amplitude / system.omega_sq
    return -point, point


def _radius_of(plan: ZonePlan, x: np.ndarray, rho: Optional[float]) -> float:
    if plan.r_switch_kind is RadiusKind.EUCLIDEAN:
        return float(np.linalg.norm(x))
    if rho is None:
        raise ValidationError("rho", "rho-tagged plans need rho(x) to classify")
    return rho


def classify(plan: ZonePlan, x: np.ndarray, previous: StageLabel = StageLabel.HIGH,
             rho: Optional[float] = None, time_to_go: Optional[float] = None,
             arrival_threshold: float = 0.0) -> StageLabel:
    """Monotone stage label of x given the previous label.

    rho is needed for rho-tagged plans above the middle stage and
    time_to_go for the time-scale entry rule and for arrival.
    """
    arr = as_array(x)
    if previous is StageLabel.ARRIVED:
        return StageLabel.ARRIVED
    if previous.rank >= StageLabel.TERMINAL.rank or _enters_terminal(plan, arr, time_to_go):
        if not np.any(arr) or (time_to_go is not None and time_to_go <= arrival_threshold):
            return StageLabel.ARRIVED
        return StageLabel.TERMINAL
    if previous.rank >= StageLabel.MIDDLE.rank:
        return StageLabel.MIDDLE
    if _radius_of(plan, arr, rho) <= plan.r_switch:
        return StageLabel.MIDDLE
    return StageLabel.HIGH


def _enters_terminal(plan: ZonePlan, x: np.ndarray, time_to_go: Optional[float]) -> bool:
    if plan.terminal_entry is TerminalEntry.TIME_SCALE:
        if not np.any(x):
            return True
        if time_to_go is None:
            raise ValidationError("time_to_go", "time-scale entry needs Tfrak(D^-1 x)")
        return time_to_go <= plan.theta
    return zone_value(plan, x) <= 1.0


@dataclass(frozen=True)
class ConditionAReport:
    """Sampled support-function comparison of the attractor basin with G_Theta."""
    directions: int
    min_margin: float
    worst_direction: tuple[float, ...]
    holds: bool

    def to_dict(self) -> dict:
        return {
            "directions": self.directions,
            "min_margin": self.min_margin,
            "worst_direction": list(self.worst_direction),
            "holds": self.holds,
        }


def condition_a_sampled(plan: ZonePlan, system: OscillatorSystem, geometry: SupportGeometry,
                        directions: int, seed: int) -> ConditionAReport:
    """Compare U r H_basin(p) with the support of G_Theta over random unit p.

    The basin is the ball of radius r_switch for Euclidean plans and
    r_switch times the limit body for rho plans; the support of G_Theta
    at p is sqrt(p^T M^-1 p).
    """
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((directions, system.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    inverse = linalg.inv(plan.zone_form)
    zone_support = np.sqrt(np.einsum("ij,jk,ik->i", dirs, inverse, dirs))
    if plan.r_switch_kind is RadiusKind.EUCLIDEAN:
        basin = np.ones(directions)
    else:
        basin = np.array([limit_support(system, geometry, p) for p in dirs])
    margins = zone_support - plan.U * plan.r_switch * basin
    worst = int(np.argmin(margins))
    return ConditionAReport(
        directions=directions,
        min_margin=float(margins[worst]),
        worst_direction=tuple(float(v) for v in dirs[worst]),
        holds=bool(margins[worst] >= 0.0),
    )


def strip_value(transform: CanonicalTransform, x: np.ndarray) -> float:
    """|Cx|, which stays below 1/2 on G_Theta."""
    return abs(float(transform.C @ as_array(x)))
