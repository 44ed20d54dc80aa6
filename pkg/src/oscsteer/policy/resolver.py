"""Numerics resolver: loads numerics.json and presets.json and exposes
every tolerance, budget and preset as a typed policy object.

No magic. No defaults in code. If a value is missing from the config,
it fails loud.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from oscsteer.errors import ParseError, ValidationError


@dataclass(frozen=True)
class QuadraturePolicy:
    """Budgets for every quadrature used by the geometry module."""
    torus_nodes: dict[int, int]
    torus_max_doublings: int
    monte_carlo_min_n: int
    monte_carlo_samples: int
    monte_carlo_batch: int
    monte_carlo_seed: int
    bessel_truncation_factor: float
    bessel_panel_nodes: int
    finite_support_nodes_per_period: int
    finite_support_refine_depth: int

    def torus_start_nodes(self, n: int) -> int:
        """Initial per-axis node count for an n-torus (n >= 2)."""
        if n in self.torus_nodes:
            return self.torus_nodes[n]
        return self.torus_nodes[max(self.torus_nodes)]


@dataclass(frozen=True)
class GeometryPolicy:
    singular_rel_tol: float
    fd_step: float
    default_tol: float
    resonance_max_coeff: int
    resonance_tol: float


@dataclass(frozen=True)
class DualSolverPolicy:
    tol: float
    max_iter: int
    initial_step: float
    backtrack_shrink: float
    max_backtracks: int
    armijo: float


@dataclass(frozen=True)
class TerminalPolicy:
    time_scale_rtol: float
    max_bracket_steps: int
    max_dim: int


@dataclass(frozen=True)
class ZonesPolicy:
    theta_rtol: float
    condition_a_directions: int


@dataclass(frozen=True)
class SimulationPolicy:
    dt: float
    eps_sign: float
    t_max: float
    sample_stride: int
    stall_window: float
    stall_tol: float
    arrival_fraction: float
    terminal_steps_per_tfrak: int
    terminal_entry: str
    event_bisection_steps: int
    rho_monotone_slack: float


@dataclass(frozen=True)
class StudyPolicy:
    seed: int
    workers: int
    samples_per_radius: int
    stall_tol: float


@dataclass(frozen=True)
class ZonePreset:
    """A named r_switch choice."""
    name: str
    r_switch: float | None
    r_switch_kind: str
    omega: tuple[float, ...] | None = None
    x0: tuple[float, ...] | None = None


def _deep_merge(base: dict[str, Any], overrides: Mapping[str, Any], path: str = "") -> dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ValidationError(where, "unknown numerics key")
        if isinstance(out[key], dict) and isinstance(value, Mapping):
            out[key] = _deep_merge(out[key], value, where)
        else:
            out[key] = value
    return out


class NumericsResolver:
    """Loads and resolves all numeric policy.

    Usage:
        resolver = NumericsResolver.from_config_dir(Path("config"))
        sim = resolver.simulation()
        toy = resolver.preset("toy")
    """

    def __init__(self, numerics: dict[str, Any], presets: dict[str, Any]) -> None:
        self._numerics = numerics
        self._presets = presets
        self._validate_versions()

    def _validate_versions(self) -> None:
        if "version" not in self._numerics:
            raise ValidationError("numerics.version", "numerics.json missing version")
        if "version" not in self._presets:
            raise ValidationError("presets.version", "presets.json missing version")

    @classmethod
    def from_config_dir(cls, config_dir: Path) -> NumericsResolver:
        """Load from a directory containing numerics.json and presets.json."""
        numerics = cls._load_json(config_dir / "numerics.json")
        presets = cls._load_json(config_dir / "presets.json")
        return cls(numerics, presets)

    @staticmethod
    def _load_json(path: Path) -> dict[str, Any]:
        try:
            with path.open("r", encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError as exc:
            raise ParseError(str(path), "file not found") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), exc.msg, line=exc.lineno) from exc

    def with_overrides(self, overrides: Mapping[str, Any]) -> NumericsResolver:
        """Return a resolver whose numerics are deep-merged with overrides."""
        if not overrides:
            return self
        return NumericsResolver(_deep_merge(self._numerics, overrides), self._presets)

    def _section(self, name: str) -> dict[str, Any]:
        section = self._numerics.get(name)
        if not isinstance(section, dict):
            raise ValidationError(f"numerics.{name}", "missing section")
        return section

    @staticmethod
    def _require(section: dict[str, Any], name: str, key: str) -> Any:
        if key not in section:
            raise ValidationError(f"numerics.{name}.{key}", "missing key")
        return section[key]

    def _build(self, cls: type, name: str) -> Any:
        section = self._section(name)
        values = {}
        for f in cls.__dataclass_fields__:
            values[f] = self._require(section, name, f)
        return values

    # ------------------------------------------------------------------
    # Sections
    # ------------------------------------------------------------------

    def quadrature(self) -> QuadraturePolicy:
        values = self._build(QuadraturePolicy, "quadrature")
        values["torus_nodes"] = {int(k): int(v) for k, v in values["torus_nodes"].items()}
        return QuadraturePolicy(**values)

    def geometry(self) -> GeometryPolicy:
        return GeometryPolicy(**self._build(GeometryPolicy, "geometry"))

    def dual_solver(self) -> DualSolverPolicy:
        return DualSolverPolicy(**self._build(DualSolverPolicy, "dual_solver"))

    def terminal(self) -> TerminalPolicy:
        return TerminalPolicy(**self._build(TerminalPolicy, "terminal"))

    def zones(self) -> ZonesPolicy:
        return ZonesPolicy(**self._build(ZonesPolicy, "zones"))

    def simulation(self) -> SimulationPolicy:
        values = self._build(SimulationPolicy, "simulation")
        if values["terminal_entry"] not in ("ellipsoid", "time_scale"):
            raise ValidationError(
                "numerics.simulation.terminal_entry",
                f"expected 'ellipsoid' or 'time_scale', got {values['terminal_entry']!r}",
            )
        for key in ("dt", "eps_sign", "t_max"):
            if not values[key] > 0:
                raise ValidationError(f"numerics.simulation.{key}", "must be > 0")
        return SimulationPolicy(**values)

    def studies(self) -> StudyPolicy:
        return StudyPolicy(**self._build(StudyPolicy, "studies"))

    # ------------------------------------------------------------------
    # Presets
    # ------------------------------------------------------------------

    def preset(self, name: str) -> ZonePreset:
        data = self._presets.get(name)
        if data is None:
            raise ValidationError(f"presets.{name}", "unknown preset")
        omega = tuple(float(w) for w in data["omega"]) if "omega" in data else None
        x0 = tuple(float(v) for v in data["x0"]) if "x0" in data else None
        return ZonePreset(
            name=name,
            r_switch=float(data["r_switch"]) if "r_switch" in data else None,
            r_switch_kind=data["r_switch_kind"],
            omega=omega,
            x0=x0,
        )

    def default_r_switch(self, omega: tuple[float, ...]) -> float:
        """General preset: 4 * max(omega^-2) * sqrt(n), Euclidean units."""
        rule = self._presets["general"]["r_switch_rule"]
        if rule != "4*max(omega^-2)*sqrt(n)":
            raise ValidationError("presets.general.r_switch_rule", f"unsupported rule {rule!r}")
        return 4.0 * max(w ** -2 for w in omega) * math.sqrt(len(omega))

    def max_oscillators(self) -> int:
        return int(self._presets["general"]["max_n"])

    def snapshot(self) -> dict[str, Any]:
        """Full numerics echo for run summaries."""
        return {"numerics": copy.deepcopy(self._numerics), "presets": copy.deepcopy(self._presets)}
