"""oscsteer service: one facade over every run command.

Orchestrates the subsystems:
- System and plan construction (canonical transform, terminal
  controller, zone plan) from a RunConfig and the numerics resolver
- Closed-loop simulation and the toy preset
- Ratio, decay-rate, attractor and convergence studies
- Exact tables and the verification suite
- Persistence (run event log, artifacts with sha256 digests)

Every command returns a RunSummary. Module errors are caught here and
reported in summary.errors with success = False; nothing is dropped
silently.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from oscsteer import __version__
from oscsteer.canonical.brunovsky import CanonicalTransform, build_transform, toy_identification
from oscsteer.errors import HorizonExceeded, OscSteerError, ValidationError
from oscsteer.models.run import Command, RunConfig, RunSummary, build_system
from oscsteer.models.system import OscillatorSystem
from oscsteer.momentum.engine import MomentumEngine
from oscsteer.persistence.artifacts import ArtifactWriter, to_jsonable
from oscsteer.persistence.event_log import RunEventKind, RunLog
from oscsteer.policy.resolver import NumericsResolver
from oscsteer.sim import studies
from oscsteer.sim.integrator import EventKind, Scenario, Simulator, Trajectory, tfrak_regression
from oscsteer.terminal.controller import TerminalController
from oscsteer.terminal.lyapunov import gram_matrix, lyapunov_certificate, lyapunov_matrix, weight_note
from oscsteer.verification.suite import PRINTED_TOY_INSCRIBED_RADIUS, VerificationSuite
from oscsteer.zones.planner import RadiusKind, ZonePlan, build_plan, standstill_interval

logger = logging.getLogger(__name__)

_TRAJECTORY_EVENTS = {
    EventKind.STAGE_SWITCH: RunEventKind.STAGE_SWITCH,
    EventKind.ARRIVAL: RunEventKind.ARRIVAL,
    EventKind.STALL: RunEventKind.STALL,
    EventKind.MONITOR_VIOLATION: RunEventKind.MONITOR_VIOLATION,
}


@dataclasses.dataclass(frozen=True, eq=False)
class SteeringSetup:
    """Everything a closed-loop run needs for one system."""
    system: OscillatorSystem
    transform: CanonicalTransform
    controller: TerminalController
    plan: ZonePlan
    simulator: Simulator


class SteeringService:
    """Dispatches run configs to the owning modules.

    Usage:
        resolver = NumericsResolver.from_config_dir(config_dir)
        service = SteeringService(resolver)
        config = parse_config(Path("config/scenarios/toy.json"), resolver)
        summary = service.run(config)
    """

    def __init__(self, resolver: NumericsResolver) -> None:
        self._base = resolver

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    def setup(self, config: RunConfig, resolver: Optional[NumericsResolver] = None) -> SteeringSetup:
        """System, transform, controller, plan and simulator for a config."""
        resolver = resolver or self._base.with_overrides(config.numerics)
        if config.frequencies is None:
            raise ValidationError("frequencies", "required")
        system = build_system(config.frequencies)
        transform = build_transform(system, resolver.max_oscillators())
        controller = TerminalController.build(system.dim, resolver.terminal(), kappa=config.plan.kappa)
        overrides = config.plan
        if overrides.r_switch is not None:
            r_switch = overrides.r_switch
            kind = RadiusKind(overrides.r_switch_kind or RadiusKind.EUCLIDEAN.value)
        else:
            r_switch = resolver.default_r_switch(system.omega)
            kind = RadiusKind.EUCLIDEAN
        plan = build_plan(
            system, transform, controller, resolver.zones(), r_switch, kind,
            terminal_entry=overrides.terminal_entry or resolver.simulation().terminal_entry,
            theta=overrides.theta, amplitude=overrides.amplitude,
        )
        simulator = Simulator(MomentumEngine.from_resolver(system, resolver), transform, controller)
        return SteeringSetup(system, transform, controller, plan, simulator)

    # ------------------------------------------------------------------
    # Run
    # ------------------------------------------------------------------

    def run(self, config: RunConfig) -> RunSummary:
        summary = RunSummary(command=config.command.value, success=True, config=config.to_dict())
        out_dir = Path(config.output_dir) if config.output_dir else None
        log = RunLog(out_dir / "events.jsonl" if out_dir else None)
        writer = ArtifactWriter(out_dir, log) if out_dir else None
        log.record(RunEventKind.RUN_STARTED, "service", {"command": config.command.value, "version": __version__})
        try:
            resolver = self._base.with_overrides(config.numerics)
            summary.numerics = resolver.snapshot()
            log.record(RunEventKind.CONFIG_RESOLVED, "service", {"config": to_jsonable(config.to_dict())})
            if config.resonance and config.resonance.get("resonant"):
                log.record(RunEventKind.RESONANCE_ADVISORY, "service", config.resonance)
                logger.warning("frequencies are resonant (witness %s); running anyway", config.resonance["witness"])
            handler = self._handlers()[config.command]
            handler(config, resolver, summary, log, writer)
        except OscSteerError as exc:
            summary.success = False
            summary.errors.append(f"{type(exc).__name__}: {exc}")
            logger.error("%s failed: %s", config.command.value, exc)
        if writer is not None:
            summary.artifacts = writer.manifest()
            writer.write_json("summary.json", summary.to_dict())
        log.record(RunEventKind.RUN_FINISHED, "service",
                   {"success": summary.success, "exit_code": summary.exit_code, "errors": summary.errors})
        return summary

    def _handlers(self) -> dict[Command, Callable[..., None]]:
        return {
            Command.SIMULATE: self._simulate,
            Command.TOY: self._toy,
            Command.RATIO_STUDY: self._ratio_study,
            Command.DECAY_STUDY: self._decay_study,
            Command.ATTRACTOR_SCAN: self._attractor_scan,
            Command.CONVERGENCE: self._convergence,
            Command.TABLES: self._tables,
            Command.VERIFY: self._verify,
        }

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def _trajectory_run(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                        log: RunLog, writer: Optional[ArtifactWriter]) -> SteeringSetup:
        setup = self.setup(config, resolver)
        if config.x0 is None:
            raise ValidationError("x0", f"required for {config.command.value}")
        scenario = Scenario(setup.system, np.asarray(config.x0), setup.plan, resolver.simulation())
        try:
            traj = setup.simulator.simulate(scenario)
        except HorizonExceeded as exc:
            summary.success = False
            summary.errors.append(f"HorizonExceeded: {exc}")
            traj = exc.trajectory
        self._record_trajectory(traj, setup, summary, log, writer)
        summary.metrics["plan"] = setup.plan.to_dict()
        return setup

    def _record_trajectory(self, traj: Trajectory, setup: SteeringSetup, summary: RunSummary,
                           log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        for event in traj.events:
            kind = _TRAJECTORY_EVENTS.get(event.kind)
            if kind is not None:
                log.record(kind, "sim", {"t": event.t, "detail": event.detail, "hard": event.hard})
        metrics = traj.summary()
        rhos = [s.rho for s in traj.samples if s.rho is not None]
        metrics["final_rho"] = rhos[-1] if rhos else None
        metrics["invariant_errors"] = traj.check_invariants()
        try:
            fit = tfrak_regression(traj)
            metrics["tfrak_fit"] = {"slope": fit.slope, "r_squared": fit.r_squared, "samples": fit.samples}
        except ValidationError:
            metrics["tfrak_fit"] = None
        summary.metrics["trajectory"] = metrics
        summary.monitor_counts = dict(sorted(traj.monitor_counts.items()))
        summary.hard_violations = traj.hard_violations
        summary.lines.append(f"status={metrics['status']} total_time={traj.total_time!r}")
        if writer is not None:
            writer.write_trajectory("trajectory.csv", traj, setup.system.n)
            writer.write_events("events.csv", traj)

    def _simulate(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                  log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        self._trajectory_run(config, resolver, summary, log, writer)

    def _toy(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
             log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        setup = self._trajectory_run(config, resolver, summary, log, writer)
        plan = setup.plan
        ident = toy_identification(setup.transform)
        lo, hi = standstill_interval(setup.system, plan.U)
        summary.metrics["toy"] = {
            "theta": plan.theta,
            "theta_fourth_power": plan.theta ** 4,
            "kappa_squared": plan.kappa ** 2,
            "lambda_in": plan.lambda_in,
            "lambda_in_printed": PRINTED_TOY_INSCRIBED_RADIUS,
            "U": plan.U,
            "standstill": [lo.tolist(), hi.tolist()],
            "control": ident.physical_control,
            "canonical_of_state": ident.canonical_of_state,
        }
        summary.lines.append(f"Theta^4={plan.theta ** 4!r} lambda={plan.lambda_in!r} U={plan.U!r}")

    def _workers(self, config: RunConfig, resolver: NumericsResolver) -> int:
        return config.study.workers if config.study.workers is not None else resolver.studies().workers

    def _seed(self, config: RunConfig, resolver: NumericsResolver) -> int:
        return config.seed if config.seed is not None else resolver.studies().seed

    @staticmethod
    def _require(value: Any, name: str, command: Command) -> Any:
        if value is None:
            raise ValidationError(f"study.{name}", f"required for {command.value}")
        return value

    def _ratio_study(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                     log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        setup = self.setup(config, resolver)
        levels = self._require(config.study.levels, "levels", config.command)
        samples = config.study.samples or resolver.studies().samples_per_radius
        table = studies.ratio_study(setup.simulator, setup.plan, resolver.simulation(), levels, samples,
                                    self._seed(config, resolver), self._workers(config, resolver))
        summary.metrics["ratio"] = {"levels": table.rows, "notes": table.notes}
        summary.hard_violations = sum(r.get("hard_violations", 0) for r in table.runs)
        for row in table.rows:
            summary.lines.append(f"level={row['level']!r} rho/T={row['rho_over_T']}")
        if writer is not None:
            writer.write_json("ratio_table.json", table.to_dict())

    def _decay_study(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                     log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        setup = self.setup(config, resolver)
        study = config.study
        table = studies.decay_rate_study(
            setup.simulator, resolver.simulation(),
            self._require(study.rho_start, "rho_start", config.command),
            self._require(study.rho_stop, "rho_stop", config.command),
            study.samples or resolver.studies().samples_per_radius,
            self._seed(config, resolver), workers=self._workers(config, resolver),
        )
        summary.metrics["decay"] = {k: v for k, v in table.items() if k != "runs"}
        summary.lines.append(f"rate={table['rate']} in band: {table['fraction_in_band']!r}")
        if writer is not None:
            writer.write_json("decay_table.json", table)

    def _attractor_scan(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                        log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        setup = self.setup(config, resolver)
        study = config.study
        report = studies.attractor_scan(
            setup.simulator, resolver.simulation(),
            self._require(study.rho_level, "rho_level", config.command),
            self._require(study.n_inits, "n_inits", config.command),
            self._require(study.horizon, "horizon", config.command),
            study.stall_tol if study.stall_tol is not None else resolver.studies().stall_tol,
            self._seed(config, resolver), fd_step=resolver.geometry().fd_step,
            workers=self._workers(config, resolver),
        )
        doc = report.to_dict()
        summary.metrics["attractor"] = {k: v for k, v in doc.items() if k != "runs"}
        summary.lines.append(f"stalls={report.stalls} mu_hat={report.mu_hat!r}")
        if writer is not None:
            writer.write_json("attractor_report.json", doc)

    def _convergence(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                     log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        setup = self.setup(config, resolver)
        if config.x0 is None:
            raise ValidationError("x0", "required for convergence")
        study = config.study
        scenario = Scenario(setup.system, np.asarray(config.x0), setup.plan, resolver.simulation())
        table = studies.convergence_study(
            setup.simulator, scenario,
            self._require(study.dt_list, "dt_list", config.command),
            self._require(study.eps_list, "eps_list", config.command),
            workers=self._workers(config, resolver),
        )
        summary.metrics["convergence"] = table
        summary.hard_violations = sum(row["hard_violations"] for row in table["grid"])
        summary.lines.append(f"cauchy={table['cauchy']}")
        if writer is not None:
            writer.write_json("convergence_table.json", table)

    def _tables(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        dim = config.study.dim if config.study.dim is not None else 4
        doc = exact_tables(dim, resolver.terminal().max_dim)
        summary.metrics["tables"] = doc
        summary.lines.extend(format_tables(doc))
        if writer is not None:
            writer.write_json("tables.json", doc)

    def _verify(self, config: RunConfig, resolver: NumericsResolver, summary: RunSummary,
                log: RunLog, writer: Optional[ArtifactWriter]) -> None:
        suite = VerificationSuite(resolver, self._seed(config, resolver), quick=config.study.quick)
        report = suite.run()
        summary.metrics["verify"] = {"passed": report.passed, "checks": len(report.checks),
                                     "failures": [f"{c.group}.{c.name}" for c in report.failures]}
        summary.lines.extend(report.lines())
        if not report.passed:
            summary.success = False
            summary.errors.append(f"{len(report.failures)} verification check(s) failed")
        if writer is not None:
            writer.write_json("verify.json", report.to_dict())


# ----------------------------------------------------------------------
# Exact tables
# ----------------------------------------------------------------------


def exact_tables(dim: int, max_dim: int) -> dict[str, Any]:
    """q, Q, Cfrak and kappa^2 for one dimension, as exact strings and integers."""
    if dim < 1 or dim > max_dim:
        raise ValidationError("study.dim", f"expected 1 <= dim <= {max_dim}, got {dim}")
    q = gram_matrix(dim)
    big_q = lyapunov_matrix(dim)
    cert = lyapunov_certificate(dim)
    return {
        "dim": dim,
        "q": [[str(v) for v in row] for row in q.tolist()],
        "Q": [[int(v) for v in row] for row in big_q.tolist()],
        "C_frak": [str(-v / 2) for v in big_q.row(0)],
        "kappa_squared": f"1/{dim * (dim + 1)}",
        "Q11": int(big_q[0, 0]),
        "certificate": cert.to_dict(),
        "weight": weight_note(),
    }


def format_tables(doc: dict[str, Any]) -> list[str]:
    lines = [f"dim = {doc['dim']}", "q ="]
    lines += ["  " + "  ".join(row) for row in doc["q"]]
    width = max(len(str(v)) for row in doc["Q"] for v in row)
    lines.append("Q = q^-1 =")
    lines += ["  " + "  ".join(str(v).rjust(width) for v in row) for row in doc["Q"]]
    lines.append("C_frak = " + "  ".join(doc["C_frak"]))
    lines.append(f"kappa^2 = {doc['kappa_squared']}")
    lines.append(f"Q11 = {doc['Q11']}; Q11 divides all entries: {doc['certificate']['q11_divides_all']}")
    lines.append(f"weight: {doc['weight']}")
    return lines
