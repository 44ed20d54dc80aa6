"""Closed-loop simulation through the three control stages.

Stage HIGH applies the basic control at full amplitude, MIDDLE the basic
control at amplitude U and TERMINAL the linear-plus-canonical feedback.
Each stage runs fixed-step RK4 on the regularized field; a stage
boundary crossed inside a step is located by bisection on the step
length. Arrival is declared once Tfrak falls below arrival_fraction *
Theta and the remaining Tfrak is added to the total time.
"""

from __future__ import annotations

import collections
import dataclasses
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import stats

from oscsteer.canonical.brunovsky import CanonicalTransform, build_transform
from oscsteer.errors import HorizonExceeded, NumericalBlowup, ValidationError
from oscsteer.models.system import OscillatorSystem, as_array
from oscsteer.momentum.engine import DualTracker, MomentumEngine, sgn_eps
from oscsteer.policy.resolver import NumericsResolver, SimulationPolicy
from oscsteer.terminal.controller import TerminalController
from oscsteer.zones.planner import STRIP_HALF_WIDTH, RadiusKind, StageLabel, TerminalEntry, ZonePlan, classify

logger = logging.getLogger(__name__)

_MAX_STEP_RETRIES = 8
_CONTROL_BOUND_SLACK = 1e-12


class EventKind(str, enum.Enum):
    STAGE_SWITCH = "stage-switch"
    SIGN_SWITCH = "sign-switch"
    ARRIVAL = "arrival"
    STALL = "stall"
    MONITOR_VIOLATION = "monitor-violation"


class Monitor(str, enum.Enum):
    """Named monitors; CONTROL_BOUND and STAGE_ORDER are hard."""
    CONTROL_BOUND = "control-bound"
    STAGE_ORDER = "stage-order"
    CONTROL_SATURATED = "control-saturated"
    STRIP = "strip"
    RHO_INCREASE = "rho-increase"
    TFRAK_RATE = "tfrak-rate"
    ENERGY = "energy"
    HAMILTONIAN = "hamiltonian"

    @property
    def hard(self) -> bool:
        return self in (Monitor.CONTROL_BOUND, Monitor.STAGE_ORDER)


class RunStatus(str, enum.Enum):
    ARRIVED = "arrived"
    STALLED = "stalled"
    HORIZON = "horizon"
    LEVEL_REACHED = "level-reached"


@dataclass(frozen=True)
class MonitorFlags:
    rho: bool = True
    tfrak: bool = True
    energy: bool = False
    control_bound: bool = True
    hamiltonian: bool = False


@dataclass(frozen=True, eq=False)
class Scenario:
    """One closed-loop run: system, start, plan and step settings."""
    system: OscillatorSystem
    x0: np.ndarray
    plan: ZonePlan
    settings: SimulationPolicy
    monitors: MonitorFlags = MonitorFlags()
    stop_on_stall: bool = False

    def __post_init__(self) -> None:
        s = self.settings
        for name in ("dt", "eps_sign", "t_max"):
            value = getattr(s, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(name, f"must be a positive finite number, got {value!r}")
        if s.sample_stride < 1:
            raise ValidationError("sample_stride", "must be >= 1")
        if not 0.0 < s.arrival_fraction < 1.0:
            raise ValidationError("arrival_fraction", "must lie in (0, 1)")
        object.__setattr__(self, "x0", self.system.check_state(as_array(self.x0), "x0").copy())

    def with_settings(self, **changes) -> Scenario:
        return dataclasses.replace(self, settings=dataclasses.replace(self.settings, **changes))

    @property
    def arrival_threshold(self) -> float:
        return self.settings.arrival_fraction * self.plan.theta


@dataclass(frozen=True)
class Sample:
    t: float
    x: tuple[float, ...]
    u: float
    stage: StageLabel
    rho: Optional[float]
    tfrak: Optional[float]


@dataclass(frozen=True)
class TrajectoryEvent:
    t: float
    kind: EventKind
    detail: str = ""
    hard: bool = False


@dataclass
class Trajectory:
    """Sampled run with its events; total_time includes the final Tfrak."""
    samples: list[Sample] = field(default_factory=list)
    events: list[TrajectoryEvent] = field(default_factory=list)
    total_time: Optional[float] = None
    status: Optional[RunStatus] = None
    steps: int = 0
    dual_solves: int = 0
    stage_entry: dict[str, float] = field(default_factory=dict)
    monitor_counts: dict[str, int] = field(default_factory=dict)

    @property
    def arrived(self) -> bool:
        return self.status is RunStatus.ARRIVED

    @property
    def final_state(self) -> np.ndarray:
        return np.asarray(self.samples[-1].x)

    @property
    def hard_violations(self) -> int:
        return sum(v for k, v in self.monitor_counts.items() if Monitor(k).hard)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def states(self) -> np.ndarray:
        return np.array([s.x for s in self.samples])

    def controls(self) -> np.ndarray:
        return np.array([s.u for s in self.samples])

    def stages(self) -> list[StageLabel]:
        return [s.stage for s in self.samples]

    def rhos(self) -> np.ndarray:
        return np.array([math.nan if s.rho is None else s.rho for s in self.samples])

    def tfraks(self) -> np.ndarray:
        return np.array([math.nan if s.tfrak is None else s.tfrak for s in self.samples])

    def events_of(self, kind: EventKind) -> list[TrajectoryEvent]:
        return [e for e in self.events if e.kind is kind]

    def check_invariants(self) -> list[str]:
        """Timestamps increase, stages never regress and |u| <= 1."""
        errors = []
        for prev, cur in zip(self.samples, self.samples[1:]):
            if not cur.t > prev.t:
                errors.append(f"timestamps not increasing at t={cur.t!r}")
            if cur.stage.rank < prev.stage.rank:
                errors.append(f"stage regressed {prev.stage.value} -> {cur.stage.value} at t={cur.t!r}")
        for s in self.samples:
            if abs(s.u) > 1.0 + _CONTROL_BOUND_SLACK:
                errors.append(f"|u| = {abs(s.u)!r} > 1 at t={s.t!r}")
        return errors

    def summary(self) -> dict:
        return {
            "status": self.status.value if self.status else None,
            "total_time": self.total_time,
            "steps": self.steps,
            "samples": len(self.samples),
            "dual_solves": self.dual_solves,
            "stage_entry": dict(self.stage_entry),
            "monitor_counts": dict(sorted(self.monitor_counts.items())),
            "hard_violations": self.hard_violations,
            "final_state": list(self.samples[-1].x) if self.samples else None,
        }


@dataclass
class _Step:
    x: np.ndarray
    u_raw: float
    u: float
    s: Optional[float]
    energy_predicted: float


ControlFn = Callable[[np.ndarray], Tuple[float, Optional[float]]]


def rk4_step(system: OscillatorSystem, x: np.ndarray, h: float, control: ControlFn) -> _Step:
    """One RK4 step of x' = Ax + B clamp(u(x)); u is re-evaluated at every stage."""
    ks, us, points = [], [], []
    raw, s = control(x)
    point = x
    for weight in (0.5, 0.5, 1.0, None):
        value = raw if not ks else control(point)[0]
        u = max(-1.0, min(1.0, value))
        k = system.rhs(point, u)
        ks.append(k)
        us.append(u)
        points.append(point)
        if weight is not None:
            point = x + weight * h * k
    rates = [u * float(np.sum(p[1::2])) for u, p in zip(us, points)]
    return _Step(
        x=x + (h / 6.0) * (ks[0] + 2.0 * ks[1] + 2.0 * ks[2] + ks[3]),
        u_raw=raw,
        u=us[0],
        s=s,
        energy_predicted=(h / 6.0) * (rates[0] + 2.0 * rates[1] + 2.0 * rates[2] + rates[3]),
    )


class Simulator:
    """Runs scenarios for one system.

    Usage:
        sim = Simulator.from_resolver(system, resolver)
        trajectory = sim.simulate(scenario)
    """

    def __init__(self, engine: MomentumEngine, transform: CanonicalTransform,
                 controller: TerminalController) -> None:
        self._engine = engine
        self._transform = transform
        self._controller = controller

    @classmethod
    def from_resolver(cls, system: OscillatorSystem, resolver: NumericsResolver) -> Simulator:
        return cls(
            MomentumEngine.from_resolver(system, resolver),
            build_transform(system, resolver.max_oscillators()),
            TerminalController.from_resolver(system.dim, resolver),
        )

    @property
    def engine(self) -> MomentumEngine:
        return self._engine

    @property
    def transform(self) -> CanonicalTransform:
        return self._transform

    @property
    def controller(self) -> TerminalController:
        return self._controller

    # ------------------------------------------------------------------
    # Controls
    # ------------------------------------------------------------------

    def time_to_go(self, x: np.ndarray) -> float:
        if not np.any(x):
            return 0.0
        return self._controller.time_scale(self._transform.to_canonical(x)).value

    def control(self, x: np.ndarray, stage: StageLabel, scenario: Scenario,
                tracker: Optional[DualTracker] = None) -> tuple[float, Optional[float]]:
        """(raw control, switching sum) for the given stage at x."""
        if not np.any(x) or stage is StageLabel.ARRIVED:
            return 0.0, None
        if stage is StageLabel.TERMINAL:
            raw = float(self._transform.C @ x) + self._controller.control_canonical(self._transform.to_canonical(x))
            return raw, None
        amplitude = 1.0 if stage is StageLabel.HIGH else scenario.plan.U
        s, _ = self._engine.switching_sum(x, tracker=tracker)
        return -amplitude * sgn_eps(s, scenario.settings.eps_sign), s

    def _rk4(self, x: np.ndarray, h: float, stage: StageLabel, scenario: Scenario,
             tracker: Optional[DualTracker]) -> _Step:
        return rk4_step(scenario.system, x, h, lambda v: self.control(v, stage, scenario, tracker))

    def _safe_step(self, x: np.ndarray, h: float, stage: StageLabel, scenario: Scenario,
                   tracker: Optional[DualTracker]) -> tuple[_Step, float]:
        for _ in range(_MAX_STEP_RETRIES):
            step = self._rk4(x, h, stage, scenario, tracker)
            if np.all(np.isfinite(step.x)):
                return step, h
            h *= 0.5
        raise NumericalBlowup(f"step rejected {_MAX_STEP_RETRIES} times in stage {stage.value}")

    # ------------------------------------------------------------------
    # Stage logic
    # ------------------------------------------------------------------

    def _classify(self, scenario: Scenario, x: np.ndarray, previous: StageLabel,
                  rho: Optional[float]) -> StageLabel:
        plan = scenario.plan
        ttg = None
        if plan.terminal_entry is TerminalEntry.TIME_SCALE and previous.rank < StageLabel.TERMINAL.rank:
            ttg = self.time_to_go(x)
        if plan.r_switch_kind is RadiusKind.RHO and rho is None and np.any(x):
            rho = self._engine.rho_norm(x)
        return classify(plan, x, previous, rho=rho, time_to_go=ttg, arrival_threshold=scenario.arrival_threshold)

    def _locate(self, x: np.ndarray, h: float, stage: StageLabel, scenario: Scenario,
                tracker: Optional[DualTracker]) -> float:
        """Shortest step length after which the stage has changed."""
        lo, hi = 0.0, h
        for _ in range(scenario.settings.event_bisection_steps):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            trial = self._rk4(x, mid, stage, scenario, tracker).x
            if self._classify(scenario, trial, stage, None) is stage:
                lo = mid
            else:
                hi = mid
        return hi

    # ------------------------------------------------------------------
    # Main loop
    # ------------------------------------------------------------------

    def simulate(self, scenario: Scenario, raise_on_horizon: bool = True) -> Trajectory:
        """Integrate the closed loop until arrival, stall (if requested) or t_max."""
        cfg = scenario.settings
        system = scenario.system
        traj = Trajectory()
        rec = _Recorder(traj)
        tracker = DualTracker()
        x = scenario.x0.copy()
        t = 0.0

        if not np.any(x):
            traj.samples.append(Sample(0.0, tuple(x.tolist()), 0.0, StageLabel.ARRIVED, 0.0, 0.0))
            traj.stage_entry[StageLabel.ARRIVED.value] = 0.0
            rec.event(0.0, EventKind.ARRIVAL, "Tfrak=0")
            traj.total_time, traj.status = 0.0, RunStatus.ARRIVED
            return traj

        rho = self._rho(x, tracker)
        stage = self._classify(scenario, x, StageLabel.HIGH, rho)
        if stage.rank >= StageLabel.TERMINAL.rank:
            rho = None
        traj.stage_entry[stage.value] = 0.0
        tfrak = self.time_to_go(x) if stage.rank >= StageLabel.TERMINAL.rank else None
        if stage is StageLabel.ARRIVED:
            return self._arrive(traj, rec, x, t, tfrak or 0.0)

        window: collections.deque[tuple[float, float]] = collections.deque()
        if rho is not None:
            window.append((t, rho))
        sign_state = 0
        saturated = False
        step_index = 0

        while True:
            if stage is StageLabel.TERMINAL:
                if tfrak <= scenario.arrival_threshold:
                    traj.dual_solves = tracker.solves
                    return self._arrive(traj, rec, x, t, tfrak)
                h = min(cfg.dt, tfrak / cfg.terminal_steps_per_tfrak)
            else:
                h = cfg.dt
            if t >= cfg.t_max:
                traj.samples.append(self._sample(t, x, stage, scenario, rho, tfrak, tracker))
                traj.status = RunStatus.HORIZON
                traj.dual_solves = tracker.solves
                if raise_on_horizon:
                    raise HorizonExceeded(f"no arrival before t_max = {cfg.t_max}", trajectory=traj)
                return traj
            h = min(h, cfg.t_max - t)

            step, h = self._safe_step(x, h, stage, scenario, tracker)
            x_new = step.x
            rho_new = self._rho(x_new, tracker) if stage.rank < StageLabel.TERMINAL.rank else None
            new_stage = stage if stage is StageLabel.TERMINAL else self._classify(scenario, x_new, stage, rho_new)
            if new_stage is not stage:
                h = self._locate(x, h, stage, scenario, tracker)
                step = self._rk4(x, h, stage, scenario, tracker)
                x_new = step.x
                rho_new = self._rho(x_new, tracker) if stage.rank < StageLabel.TERMINAL.rank else None
                new_stage = self._classify(scenario, x_new, stage, rho_new)

            if step_index % cfg.sample_stride == 0:
                traj.samples.append(Sample(t, tuple(x.tolist()), step.u, stage, rho, tfrak))

            # monitors on the accepted step
            if scenario.monitors.control_bound and abs(step.u) > 1.0 + _CONTROL_BOUND_SLACK:
                rec.monitor(t, Monitor.CONTROL_BOUND, f"|u|={abs(step.u)!r}")
            over = abs(step.u_raw) > 1.0
            if over and not saturated:
                rec.monitor(t, Monitor.CONTROL_SATURATED, f"raw u={step.u_raw!r}")
            elif over:
                rec.count(Monitor.CONTROL_SATURATED)
            saturated = over
            if stage is StageLabel.TERMINAL and abs(float(self._transform.C @ x)) > STRIP_HALF_WIDTH:
                rec.monitor(t, Monitor.STRIP, f"|Cx|={abs(float(self._transform.C @ x))!r}")
            if scenario.monitors.rho and rho is not None and rho_new is not None and new_stage is stage:
                if rho_new - rho > cfg.rho_monotone_slack * h:
                    rec.monitor(t + h, Monitor.RHO_INCREASE, f"d rho={rho_new - rho!r}")
            if scenario.monitors.energy and stage is StageLabel.HIGH and new_stage is stage:
                actual = _energy(system, x_new) - _energy(system, x)
                if abs(actual - step.energy_predicted) > 1e-6 * h * max(1.0, _energy(system, x)):
                    rec.monitor(t + h, Monitor.ENERGY, f"mismatch={actual - step.energy_predicted!r}")
            if scenario.monitors.hamiltonian and stage.rank < StageLabel.TERMINAL.rank:
                p = self._engine.rho_gradient(x_new, tracker=tracker)
                drift = float(p @ (system.A @ x_new))
                if abs(drift) > 1e-6 * float(np.linalg.norm(p) * np.linalg.norm(system.A @ x_new)):
                    rec.monitor(t + h, Monitor.HAMILTONIAN, f"<Ax,p>={drift!r}")

            if step.s is not None:
                eps = cfg.eps_sign
                state = 1 if step.s > eps else (-1 if step.s < -eps else sign_state)
                if sign_state and state != sign_state:
                    rec.event(t, EventKind.SIGN_SWITCH, f"s={step.s!r}")
                sign_state = state

            t += h
            x = x_new
            step_index += 1
            traj.steps = step_index

            if new_stage.rank < stage.rank:
                rec.monitor(t, Monitor.STAGE_ORDER, f"{stage.value}->{new_stage.value}")
                new_stage = stage
            if new_stage is not stage:
                rec.event(t, EventKind.STAGE_SWITCH, f"{stage.value}->{new_stage.value}")
                logger.info("stage %s -> %s at t=%.6f", stage.value, new_stage.value, t)
                traj.stage_entry.setdefault(new_stage.value, t)
                stage = new_stage
                window.clear()
                step_index = 0
                if stage is StageLabel.ARRIVED:
                    traj.dual_solves = tracker.solves
                    return self._arrive(traj, rec, x, t, self.time_to_go(x))

            if stage is StageLabel.TERMINAL:
                rho = None
                previous = tfrak
                tfrak = self.time_to_go(x)
                if scenario.monitors.tfrak and previous is not None:
                    if abs(tfrak - (previous - h)) > 1e-3 * h:
                        rec.monitor(t, Monitor.TFRAK_RATE, f"dTfrak={tfrak - previous!r} over h={h!r}")
            else:
                rho = rho_new
                window.append((t, rho))
                while len(window) > 1 and t - window[1][0] >= cfg.stall_window:
                    window.popleft()
                if t - window[0][0] >= cfg.stall_window and window[0][1] - rho < cfg.stall_tol:
                    rec.event(t, EventKind.STALL, f"rho={rho!r} over {cfg.stall_window}")
                    window.clear()
                    if scenario.stop_on_stall:
                        traj.samples.append(self._sample(t, x, stage, scenario, rho, None, tracker))
                        traj.status = RunStatus.STALLED
                        traj.dual_solves = tracker.solves
                        return traj

    def run_basic(self, x0: np.ndarray, settings: SimulationPolicy, horizon: float, amplitude: float = 1.0,
                  rho_stop: float = 0.0, stop_on_stall: bool = True) -> Trajectory:
        """Basic control alone, no stage changes.

        Stops at the horizon, on a stall (if requested) or once rho
        falls to rho_stop. Every sample carries rho.
        """
        system = self._engine.system
        x = system.check_state(as_array(x0)).copy()
        traj = Trajectory()
        rec = _Recorder(traj)
        tracker = DualTracker()
        t = 0.0
        if horizon <= 0.0 or not np.any(x):
            traj.status = RunStatus.HORIZON
            return traj
        rho = self._rho(x, tracker)
        traj.stage_entry[StageLabel.HIGH.value] = 0.0
        window: collections.deque[tuple[float, float]] = collections.deque([(t, rho)])

        def basic(v: np.ndarray) -> tuple[float, Optional[float]]:
            if not np.any(v):
                return 0.0, None
            s, _ = self._engine.switching_sum(v, tracker=tracker)
            return -amplitude * sgn_eps(s, settings.eps_sign), s

        step_index = 0
        while True:
            if rho <= rho_stop:
                traj.samples.append(Sample(t, tuple(x.tolist()), basic(x)[0], StageLabel.HIGH, rho, None))
                traj.status = RunStatus.LEVEL_REACHED
                break
            if t >= horizon:
                traj.samples.append(Sample(t, tuple(x.tolist()), basic(x)[0], StageLabel.HIGH, rho, None))
                traj.status = RunStatus.HORIZON
                break
            h = min(settings.dt, horizon - t)
            step = rk4_step(system, x, h, basic)
            if not np.all(np.isfinite(step.x)):
                raise NumericalBlowup(f"basic control step failed at t={t!r}")
            if step_index % settings.sample_stride == 0:
                traj.samples.append(Sample(t, tuple(x.tolist()), step.u, StageLabel.HIGH, rho, None))
            t += h
            x = step.x
            rho = self._rho(x, tracker)
            step_index += 1
            window.append((t, rho))
            while len(window) > 1 and t - window[1][0] >= settings.stall_window:
                window.popleft()
            if t - window[0][0] >= settings.stall_window and window[0][1] - rho < settings.stall_tol:
                rec.event(t, EventKind.STALL, f"rho={rho!r} over {settings.stall_window}")
                window.clear()
                window.append((t, rho))
                if stop_on_stall:
                    traj.samples.append(Sample(t, tuple(x.tolist()), basic(x)[0], StageLabel.HIGH, rho, None))
                    traj.status = RunStatus.STALLED
                    break
        traj.steps = step_index
        traj.dual_solves = tracker.solves
        return traj

    def _rho(self, x: np.ndarray, tracker: DualTracker) -> float:
        if not np.any(x):
            return 0.0
        return self._engine.rho_norm(x, tracker=tracker)

    def _sample(self, t: float, x: np.ndarray, stage: StageLabel, scenario: Scenario,
                rho: Optional[float], tfrak: Optional[float], tracker: DualTracker) -> Sample:
        raw, _ = self.control(x, stage, scenario, tracker)
        return Sample(t, tuple(x.tolist()), max(-1.0, min(1.0, raw)), stage, rho, tfrak)

    def _arrive(self, traj: Trajectory, rec: _Recorder, x: np.ndarray, t: float, tfrak: float) -> Trajectory:
        if traj.samples and traj.samples[-1].t >= t:
            traj.samples.pop()
        traj.samples.append(Sample(t, tuple(x.tolist()), 0.0, StageLabel.ARRIVED, None, tfrak))
        traj.stage_entry.setdefault(StageLabel.ARRIVED.value, t)
        rec.event(t, EventKind.ARRIVAL, f"Tfrak={tfrak!r}")
        traj.total_time = t + tfrak
        traj.status = RunStatus.ARRIVED
        logger.info("arrived at t=%.6f, total time %.9f", t, traj.total_time)
        return traj


class _Recorder:
    def __init__(self, traj: Trajectory) -> None:
        self._traj = traj

    def event(self, t: float, kind: EventKind, detail: str = "", hard: bool = False) -> None:
        self._traj.events.append(TrajectoryEvent(t, kind, detail, hard))

    def count(self, monitor: Monitor) -> None:
        counts = self._traj.monitor_counts
        counts[monitor.value] = counts.get(monitor.value, 0) + 1

    def monitor(self, t: float, monitor: Monitor, detail: str) -> None:
        self.count(monitor)
        self.event(t, EventKind.MONITOR_VIOLATION, f"{monitor.value}: {detail}", hard=monitor.hard)
        if monitor.hard:
            logger.error("hard monitor %s violated at t=%.6f: %s", monitor.value, t, detail)


def _energy(system: OscillatorSystem, x: np.ndarray) -> float:
    return 0.5 * float(np.sum(x[1::2] ** 2 + system.omega_sq * x[0::2] ** 2))


@dataclass(frozen=True)
class TfrakFit:
    slope: float
    r_squared: float
    samples: int


def tfrak_regression(trajectory: Trajectory) -> TfrakFit:
    """Linear fit of Tfrak(t) over the terminal-stage samples."""
    pts = [(s.t, s.tfrak) for s in trajectory.samples if s.stage is StageLabel.TERMINAL and s.tfrak is not None]
    if len(pts) < 3:
        raise ValidationError("trajectory", f"need at least 3 terminal samples, got {len(pts)}")
    t, tf = np.array(pts).T
    fit = stats.linregress(t, tf)
    return TfrakFit(float(fit.slope), float(fit.rvalue ** 2), len(pts))
