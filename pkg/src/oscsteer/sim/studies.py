"""Batch experiments: ratio study, decay-rate study, attractor scan and
(dt, eps) convergence study.

Independent trajectories fan out through joblib; results come back in
input order, so serial and parallel runs give identical tables.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from oscsteer.errors import HorizonExceeded, NumericalBlowup, OscSteerError, ValidationError
from oscsteer.policy.resolver import SimulationPolicy
from oscsteer.sim.integrator import RunStatus, Scenario, Simulator, Trajectory
from oscsteer.sim.oracle import optimal_time_n1
from oscsteer.zones.planner import ZonePlan

logger = logging.getLogger(__name__)

CAUCHY_FLOOR = 1e-6
CAUCHY_CONTRACTION = 0.5
MIN_REFINEMENT_LEVELS = 3
CURVATURE_FLOOR = 1e-12


def _stats(values: Sequence[float]) -> Optional[dict[str, float]]:
    if not values:
        return None
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "min": float(arr.min()), "max": float(arr.max())}


def _run_parallel(func, tasks: Sequence[Any], workers: int) -> list[Any]:
    if workers <= 1 or len(tasks) <= 1:
        return [func(*task) for task in tasks]
    return Parallel(n_jobs=workers)(delayed(func)(*task) for task in tasks)


def random_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform directions on the Euclidean unit sphere."""
    dirs = rng.standard_normal((count, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def scale_to_level(simulator: Simulator, direction: np.ndarray, level: float) -> np.ndarray:
    """x = level * d / rho(d); exact because rho is positively homogeneous."""
    return level * direction / simulator.engine.rho_norm(direction)


# ----------------------------------------------------------------------
# Ratio study
# ----------------------------------------------------------------------


def _ratio_task(simulator: Simulator, scenario: Scenario, level: float, with_oracle: bool) -> dict:
    row: dict[str, Any] = {"level": level, "x0": scenario.x0.tolist()}
    try:
        traj = simulator.simulate(scenario)
    except HorizonExceeded as exc:
        row["error"] = f"horizon: {exc}"
        return row
    except OscSteerError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row["T"] = traj.total_time
    row["hard_violations"] = traj.hard_violations
    if with_oracle:
        row["tau"] = optimal_time_n1(scenario.system, scenario.x0)
    return row


@dataclass
class RatioTable:
    rows: list[dict] = field(default_factory=list)
    runs: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"levels": self.rows, "runs": self.runs, "notes": self.notes}


def ratio_study(simulator: Simulator, plan: ZonePlan, settings: SimulationPolicy, levels: Sequence[float],
                samples_per_radius: int, seed: int, workers: int = 1) -> RatioTable:
    """rho(x) / T(x) per level, and tau(x) / T(x) when n = 1 with omega = 1."""
    system = simulator.engine.system
    with_oracle = system.n == 1 and system.omega[0] == 1.0
    rng = np.random.default_rng(seed)
    table = RatioTable()
    tasks = []
    for level in levels:
        dirs = random_directions(system.dim, samples_per_radius, rng)
        if not level > 0.0:
            table.notes.append(f"level {level!r} skipped: rho must be positive")
            continue
        for d in dirs:
            x0 = scale_to_level(simulator, d, float(level))
            tasks.append((simulator, Scenario(system, x0, plan, settings), float(level), with_oracle))
    results = _run_parallel(_ratio_task, tasks, workers)
    table.runs = results
    for level in levels:
        if not level > 0.0:
            continue
        rows = [r for r in results if r["level"] == float(level)]
        done = [r for r in rows if "T" in r and r["T"]]
        entry: dict[str, Any] = {
            "level": float(level),
            "samples": len(rows),
            "arrived": len(done),
            "rho_over_T": _stats([level / r["T"] for r in done]),
        }
        if with_oracle:
            entry["tau_over_T"] = _stats([r["tau"] / r["T"] for r in done])
            entry["T_over_tau"] = _stats([r["T"] / r["tau"] for r in done if r["tau"] > 0.0])
        table.rows.append(entry)
        failed = len(rows) - len(done)
        if failed:
            table.notes.append(f"level {level!r}: {failed} run(s) did not arrive")
    return table


# ----------------------------------------------------------------------
# Decay-rate study
# ----------------------------------------------------------------------


def _decay_task(simulator: Simulator, x0: np.ndarray, settings: SimulationPolicy, rho_start: float,
                rho_stop: float, horizon: float) -> dict:
    traj = simulator.run_basic(x0, settings, horizon, rho_stop=rho_stop, stop_on_stall=True)
    end = traj.samples[-1]
    rate = (rho_start - end.rho) / end.t if end.t > 0.0 else math.nan
    return {"status": traj.status.value, "t": end.t, "rho_end": end.rho, "rate": rate}


def decay_rate_study(simulator: Simulator, settings: SimulationPolicy, rho_start: float, rho_stop: float,
                     samples: int, seed: int, band: tuple[float, float] = (0.9, 1.1),
                     workers: int = 1) -> dict:
    """Average stage-one rate (rho(0) - rho(t)) / t from rho_start down to rho_stop."""
    system = simulator.engine.system
    rng = np.random.default_rng(seed)
    dirs = random_directions(system.dim, samples, rng)
    horizon = 4.0 * (rho_start - rho_stop) + settings.stall_window
    tasks = [(simulator, scale_to_level(simulator, d, rho_start), settings, rho_start, rho_stop, horizon)
             for d in dirs]
    runs = _run_parallel(_decay_task, tasks, workers)
    rates = [r["rate"] for r in runs if r["status"] == RunStatus.LEVEL_REACHED.value]
    inside = sum(1 for r in rates if band[0] <= r <= band[1])
    return {
        "rho_start": rho_start,
        "rho_stop": rho_stop,
        "samples": samples,
        "reached": len(rates),
        "rate": _stats(rates),
        "band": list(band),
        "fraction_in_band": inside / samples if samples else 0.0,
        "runs": runs,
    }


# ----------------------------------------------------------------------
# Attractor scan
# ----------------------------------------------------------------------


def singular_control(simulator: Simulator, x: np.ndarray, step: float) -> float:
    """f = <p, AB> / <d2rho/dx2 B, B> at phi = x / rho(x).

    The Hessian term is a central difference of p along B.
    Raises NumericalBlowup where that curvature vanishes.
    """
    engine = simulator.engine
    system = engine.system
    phi = x / engine.rho_norm(x)
    h = step * float(np.linalg.norm(phi))
    b = system.B
    p = engine.rho_gradient(phi)
    curvature = float((engine.rho_gradient(phi + h * b) - engine.rho_gradient(phi - h * b)) @ b) / (2.0 * h)
    if not abs(curvature) > CURVATURE_FLOOR:
        raise NumericalBlowup(f"rho has no curvature along B at phi = {phi.tolist()}; singular control undefined")
    return float(p @ (system.A @ b)) / curvature


def _attractor_task(simulator: Simulator, x0: np.ndarray, settings: SimulationPolicy, horizon: float,
                    fd_step: float) -> dict:
    traj = simulator.run_basic(x0, settings, horizon, stop_on_stall=True)
    out: dict[str, Any] = {"status": traj.status.value if traj.status else None}
    if traj.status is not RunStatus.STALLED:
        return out
    last = traj.samples[-1]
    arc = [s for s in traj.samples if s.t >= last.t - settings.stall_window and s.rho > 0.0]
    values = []
    for s in arc:
        try:
            values.append(abs(singular_control(simulator, np.asarray(s.x), fd_step)))
        except OscSteerError:
            continue
    out.update({
        "t_stall": last.t,
        "rho_stall": last.rho,
        "final_state": list(last.x),
        "arc_samples": len(arc),
        "max_abs_f": max(values) if values else None,
    })
    return out


@dataclass
class AttractorReport:
    rho_level: float
    n_inits: int
    runs: list[dict] = field(default_factory=list)
    mu_hat: Optional[float] = None

    @property
    def stalls(self) -> int:
        return sum(1 for r in self.runs if r.get("status") == RunStatus.STALLED.value)

    @property
    def inconclusive(self) -> int:
        return len(self.runs) - self.stalls

    @property
    def attractor_free_radius(self) -> Optional[float]:
        return 1.0 / self.mu_hat if self.mu_hat else None

    def to_dict(self) -> dict:
        return {
            "rho_level": self.rho_level,
            "n_inits": self.n_inits,
            "stalls": self.stalls,
            "inconclusive": self.inconclusive,
            "mu_hat": self.mu_hat,
            "attractor_free_radius": self.attractor_free_radius,
            "runs": self.runs,
        }


def attractor_scan(simulator: Simulator, settings: SimulationPolicy, rho_level: float, n_inits: int,
                   horizon: float, stall_tol: float, seed: int, fd_step: float = 1e-4,
                   workers: int = 1) -> AttractorReport:
    """Basic control at amplitude 1 from random states on {rho = rho_level}.

    mu_hat is the smallest over stalled arcs of the largest |f(phi)|
    along the arc; attractors can only live where rho <= 1 / mu_hat.
    """
    report = AttractorReport(rho_level=rho_level, n_inits=n_inits)
    if horizon <= 0.0 or n_inits <= 0:
        return report
    system = simulator.engine.system
    settings = dataclasses.replace(settings, stall_tol=stall_tol)
    dirs = random_directions(system.dim, n_inits, np.random.default_rng(seed))
    tasks = [(simulator, scale_to_level(simulator, d, rho_level), settings, horizon, fd_step) for d in dirs]
    report.runs = _run_parallel(_attractor_task, tasks, workers)
    arcs = [r["max_abs_f"] for r in report.runs if r.get("max_abs_f") is not None]
    if arcs:
        report.mu_hat = float(min(arcs))
    logger.info("attractor scan at rho=%.3g: %d stalls, mu_hat=%s", rho_level, report.stalls, report.mu_hat)
    return report


# ----------------------------------------------------------------------
# Convergence study
# ----------------------------------------------------------------------


def _convergence_task(simulator: Simulator, scenario: Scenario) -> Trajectory | str:
    try:
        return simulator.simulate(scenario)
    except HorizonExceeded as exc:
        return f"horizon: {exc}"
    except OscSteerError as exc:
        return f"{type(exc).__name__}: {exc}"


def _state_at(traj: Trajectory, t: float) -> np.ndarray:
    times = traj.times()
    states = traj.states()
    return np.array([np.interp(t, times, states[:, k]) for k in range(states.shape[1])])


def _strictly_decreasing(name: str, values: Sequence[float]) -> None:
    if any(not b < a for a, b in zip(values, values[1:])):
        raise ValidationError(name, f"refinement levels must be strictly decreasing, got {list(values)}")


def _contracts(deviations: Sequence[float], contraction: float, floor: float) -> bool:
    return len(deviations) >= 2 and all(
        cur <= max(contraction * prev, floor) for prev, cur in zip(deviations, deviations[1:])
    )


def cauchy_check(values: Sequence[float], contraction: float = CAUCHY_CONTRACTION,
                 floor: float = CAUCHY_FLOOR) -> dict[str, Any]:
    """Consecutive differences of a refinement sequence.

    Passes when there are at least two differences and each one is at
    most `contraction` times the previous or below `floor`.
    """
    deviations = [abs(float(a) - float(b)) for a, b in zip(values, values[1:])]
    return {"deviations": deviations, "passed": _contracts(deviations, contraction, floor)}


def _line_check(cells: Sequence[Any]) -> dict[str, Any]:
    """Cauchy check of total times along one grid row or column; failed cells are dropped."""
    times = [c.total_time for c in cells if not isinstance(c, str)]
    if len(times) < MIN_REFINEMENT_LEVELS:
        return {"deviations": [], "passed": None, "dropped": len(cells) - len(times)}
    out = cauchy_check(times, contraction=1.0)
    out["dropped"] = len(cells) - len(times)
    return out


def convergence_study(simulator: Simulator, scenario: Scenario, dt_list: Sequence[float],
                      eps_list: Sequence[float], workers: int = 1) -> dict:
    """Re-run the scenario over the (dt, eps) grid.

    The diagonal (dt_list[i], eps_list[i]) is the refinement sequence:
    total time and the state at a fixed sample time must each have
    deviations that at least halve or fall below the floor. Every row
    (dt fixed) and column (eps fixed) must not let its deviations grow.
    Cells that fail to arrive are recorded and left out of the verdict;
    a failed diagonal cell fails the study.
    """
    if len(dt_list) != len(eps_list):
        raise ValidationError("eps_list", "dt_list and eps_list must have equal length")
    if len(dt_list) < MIN_REFINEMENT_LEVELS:
        raise ValidationError("dt_list", f"at least {MIN_REFINEMENT_LEVELS} refinement levels are needed")
    _strictly_decreasing("dt_list", dt_list)
    _strictly_decreasing("eps_list", eps_list)
    dts = [float(dt) for dt in dt_list]
    epss = [float(eps) for eps in eps_list]
    grid = [(dt, eps) for dt in dts for eps in epss]
    tasks = [(simulator, scenario.with_settings(dt=dt, eps_sign=eps)) for dt, eps in grid]
    cells = _run_parallel(_convergence_task, tasks, workers)
    by_key = dict(zip(grid, cells))

    diagonal = [by_key[(dt, eps)] for dt, eps in zip(dts, epss)]
    failed_diagonal = [i for i, c in enumerate(diagonal) if isinstance(c, str)]
    sample_time: Optional[float] = None
    if failed_diagonal:
        time_check = state_check = {"deviations": [], "passed": False}
    else:
        sample_time = 0.5 * min(t.total_time for t in diagonal)
        time_check = cauchy_check([t.total_time for t in diagonal])
        state_devs = [float(np.linalg.norm(_state_at(a, sample_time) - _state_at(b, sample_time)))
                      for a, b in zip(diagonal, diagonal[1:])]
        state_check = {"deviations": state_devs,
                       "passed": _contracts(state_devs, CAUCHY_CONTRACTION, CAUCHY_FLOOR)}
    rows = [{"dt": dt, **_line_check([by_key[(dt, eps)] for eps in epss])} for dt in dts]
    columns = [{"eps_sign": eps, **_line_check([by_key[(dt, eps)] for dt in dts])} for eps in epss]
    lines_ok = all(line["passed"] is not False for line in rows + columns)
    passed = bool(time_check["passed"] and state_check["passed"] and lines_ok)
    logger.info("convergence study: diagonal %s/%s, rows and columns %s",
                time_check["passed"], state_check["passed"], lines_ok)

    table = []
    for (dt, eps), cell in zip(grid, cells):
        if isinstance(cell, str):
            table.append({"dt": dt, "eps_sign": eps, "error": cell, "hard_violations": 0})
        else:
            table.append({"dt": dt, "eps_sign": eps, "total_time": cell.total_time, "steps": cell.steps,
                          "hard_violations": cell.hard_violations})
    return {
        "grid": table,
        "sample_time": sample_time,
        "diagonal": {
            "total_time": time_check,
            "state_at_sample_time": state_check,
            "failed_cells": failed_diagonal,
        },
        "rows": rows,
        "columns": columns,
        "cauchy": passed,
    }
