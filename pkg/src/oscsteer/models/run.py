"""Run configuration and run summary.

A RunConfig is a JSON document naming a command, the frequencies, the
initial state, plan and numeric overrides, the output directory, the
seed and the study options. `--set dotted.key=value` overrides are
applied to the raw document before validation, so sweeps never edit
files. Missing values stay None here and are filled from
config/presets.json and config/numerics.json at run time.
"""

from __future__ import annotations

import copy
import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from oscsteer.errors import DuplicateFrequency, ParseError, ValidationError
from oscsteer.geometry.reachable import resonance_check
from oscsteer.models.system import OscillatorSystem
from oscsteer.policy.resolver import NumericsResolver

FrequencyValue = Union[float, str]


class Command(str, enum.Enum):
    SIMULATE = "simulate"
    TOY = "toy"
    RATIO_STUDY = "ratio-study"
    DECAY_STUDY = "decay-study"
    ATTRACTOR_SCAN = "attractor-scan"
    CONVERGENCE = "convergence"
    TABLES = "tables"
    VERIFY = "verify"

    @property
    def needs_system(self) -> bool:
        return self not in (Command.TABLES, Command.VERIFY)


@dataclass(frozen=True)
class PlanOverrides:
    """Explicit zone-plan values; None means computed."""
    r_switch: Optional[float] = None
    r_switch_kind: Optional[str] = None
    terminal_entry: Optional[str] = None
    theta: Optional[float] = None
    amplitude: Optional[float] = None
    kappa: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class StudyOptions:
    levels: Optional[tuple[float, ...]] = None
    samples: Optional[int] = None
    workers: Optional[int] = None
    rho_level: Optional[float] = None
    n_inits: Optional[int] = None
    horizon: Optional[float] = None
    stall_tol: Optional[float] = None
    rho_start: Optional[float] = None
    rho_stop: Optional[float] = None
    dt_list: Optional[tuple[float, ...]] = None
    eps_list: Optional[tuple[float, ...]] = None
    dim: Optional[int] = None
    quick: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, value in self.__dict__.items():
            if value is None or (key == "quick" and not value):
                continue
            out[key] = list(value) if isinstance(value, tuple) else value
        return out


@dataclass(frozen=True)
class RunConfig:
    """Validated run request; to_dict and from_dict round-trip exactly."""
    command: Command
    frequencies: Optional[tuple[FrequencyValue, ...]] = None
    x0: Optional[tuple[float, ...]] = None
    plan: PlanOverrides = PlanOverrides()
    numerics: dict[str, Any] = field(default_factory=dict)
    study: StudyOptions = StudyOptions()
    output_dir: Optional[str] = None
    seed: Optional[int] = None
    resonance: Optional[dict[str, Any]] = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"command": self.command.value}
        if self.frequencies is not None:
            out["frequencies"] = list(self.frequencies)
        if self.x0 is not None:
            out["x0"] = list(self.x0)
        if self.plan.to_dict():
            out["plan"] = self.plan.to_dict()
        if self.numerics:
            out["numerics"] = copy.deepcopy(self.numerics)
        if self.study.to_dict():
            out["study"] = self.study.to_dict()
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        if self.seed is not None:
            out["seed"] = self.seed
        if self.resonance is not None:
            out["resonance"] = copy.deepcopy(self.resonance)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        unknown = set(data) - _TOP_LEVEL_KEYS
        if unknown:
            raise ValidationError(sorted(unknown)[0], "unknown config key")
        if "command" not in data:
            raise ValidationError("command", "missing")
        try:
            command = Command(data["command"])
        except ValueError as exc:
            choices = ", ".join(c.value for c in Command)
            raise ValidationError("command", f"expected one of {choices}, got {data['command']!r}") from exc
        return cls(
            command=command,
            frequencies=_frequencies(data.get("frequencies")),
            x0=_floats("x0", data.get("x0")),
            plan=_plan(data.get("plan", {})),
            numerics=_mapping("numerics", data.get("numerics", {})),
            study=_study(data.get("study", {})),
            output_dir=_optional_str("output_dir", data.get("output_dir")),
            seed=_optional_int("seed", data.get("seed")),
            resonance=_mapping("resonance", data["resonance"]) if data.get("resonance") is not None else None,
        )


_TOP_LEVEL_KEYS = {"command", "frequencies", "x0", "plan", "numerics", "study", "output_dir", "seed", "resonance"}


def _number(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(name, "must be finite")
    return float(value)


def _floats(name: str, value: Any) -> Optional[tuple[float, ...]]:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ValidationError(name, "expected a list of numbers")
    return tuple(_number(f"{name}[{i}]", v) for i, v in enumerate(value))


def _optional_int(name: str, value: Any) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(name, f"expected an integer, got {value!r}")
    return value


def _optional_float(name: str, value: Any) -> Optional[float]:
    return None if value is None else _number(name, value)


def _optional_str(name: str, value: Any) -> Optional[str]:
    if value is None:
        return None
    if not isinstance(value, str):
        raise ValidationError(name, "expected a string")
    return value


def _mapping(name: str, value: Any) -> dict[str, Any]:
    if not isinstance(value, Mapping):
        raise ValidationError(name, "expected an object")
    return copy.deepcopy(dict(value))


def _frequencies(value: Any) -> Optional[tuple[FrequencyValue, ...]]:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or not value:
        raise ValidationError("frequencies", "expected a non-empty list")
    out: list[FrequencyValue] = []
    for i, v in enumerate(value):
        if isinstance(v, str):
            out.append(v)
        else:
            out.append(_number(f"frequencies[{i}]", v))
    return tuple(out)


def _plan(value: Any) -> PlanOverrides:
    data = _mapping("plan", value)
    known = set(PlanOverrides.__dataclass_fields__)
    for key in data:
        if key not in known:
            raise ValidationError(f"plan.{key}", "unknown plan key")
    return PlanOverrides(
        r_switch=_optional_float("plan.r_switch", data.get("r_switch")),
        r_switch_kind=_optional_str("plan.r_switch_kind", data.get("r_switch_kind")),
        terminal_entry=_optional_str("plan.terminal_entry", data.get("terminal_entry")),
        theta=_optional_float("plan.theta", data.get("theta")),
        amplitude=_optional_float("plan.amplitude", data.get("amplitude")),
        kappa=_optional_float("plan.kappa", data.get("kappa")),
    )


def _study(value: Any) -> StudyOptions:
    data = _mapping("study", value)
    known = set(StudyOptions.__dataclass_fields__)
    for key in data:
        if key not in known:
            raise ValidationError(f"study.{key}", "unknown study key")
    quick = data.get("quick", False)
    if not isinstance(quick, bool):
        raise ValidationError("study.quick", "expected true or false")
    return StudyOptions(
        levels=_floats("study.levels", data.get("levels")),
        samples=_optional_int("study.samples", data.get("samples")),
        workers=_optional_int("study.workers", data.get("workers")),
        rho_level=_optional_float("study.rho_level", data.get("rho_level")),
        n_inits=_optional_int("study.n_inits", data.get("n_inits")),
        horizon=_optional_float("study.horizon", data.get("horizon")),
        stall_tol=_optional_float("study.stall_tol", data.get("stall_tol")),
        rho_start=_optional_float("study.rho_start", data.get("rho_start")),
        rho_stop=_optional_float("study.rho_stop", data.get("rho_stop")),
        dt_list=_floats("study.dt_list", data.get("dt_list")),
        eps_list=_floats("study.eps_list", data.get("eps_list")),
        dim=_optional_int("study.dim", data.get("dim")),
        quick=quick,
    )


# ----------------------------------------------------------------------
# Overrides and parsing
# ----------------------------------------------------------------------


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split 'a.b.c=value'; the value is JSON when it parses, else a string."""
    if "=" not in text:
        raise ValidationError("--set", f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ValidationError("--set", f"empty key in {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(data: Mapping[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    out = copy.deepcopy(dict(data))
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ValidationError(".".join(path), f"{part!r} is not an object")
            node = child
        node[path[-1]] = value
    return out


def load_config_file(path: Path) -> dict[str, Any]:
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ParseError(str(path), "file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), exc.msg, line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ParseError(str(path), "top level must be an object", line=1)
    return data


def build_system(frequencies: Sequence[FrequencyValue]) -> OscillatorSystem:
    """OscillatorSystem with duplicate frequencies reported as a field error."""
    try:
        return OscillatorSystem.from_values(list(frequencies))
    except DuplicateFrequency as exc:
        raise ValidationError("frequencies", str(exc)) from exc


def parse_config(source: Optional[Union[Path, Mapping[str, Any]]], resolver: NumericsResolver,
                 overrides: Sequence[str] = (), command: Optional[str] = None) -> RunConfig:
    """Load, override, validate and fill a run config.

    `toy` with nothing else reproduces the toy preset. Frequencies are
    checked for positivity and distinctness and the resonance scan is
    recorded on the config as an advisory.
    """
    if source is None:
        data: dict[str, Any] = {}
    elif isinstance(source, Path):
        data = load_config_file(source)
    else:
        data = copy.deepcopy(dict(source))
    if command is not None:
        data["command"] = command
    data = apply_overrides(data, overrides)
    config = RunConfig.from_dict({k: v for k, v in data.items() if k != "resonance"})

    resolver.with_overrides(config.numerics).simulation()
    if config.command in (Command.TOY, Command.SIMULATE, Command.CONVERGENCE) and config.frequencies is None:
        config = _with_toy_defaults(config, resolver)
    if not config.command.needs_system:
        return config
    if config.frequencies is None:
        raise ValidationError("frequencies", f"required for {config.command.value}")
    system = build_system(config.frequencies)
    if system.n > resolver.max_oscillators():
        raise ValidationError("frequencies", f"at most {resolver.max_oscillators()} oscillators are supported")
    if config.x0 is not None and len(config.x0) != system.dim:
        raise ValidationError("x0", f"expected {system.dim} components, got {len(config.x0)}")
    geo = resolver.geometry()
    report = resonance_check(system.omega, geo.resonance_max_coeff, geo.resonance_tol)
    return dataclasses.replace(config, resonance=report.to_dict())


def _with_toy_defaults(config: RunConfig, resolver: NumericsResolver) -> RunConfig:
    toy = resolver.preset("toy")
    plan = config.plan
    if plan.r_switch is None:
        plan = dataclasses.replace(plan, r_switch=toy.r_switch, r_switch_kind=plan.r_switch_kind or toy.r_switch_kind)
    return dataclasses.replace(
        config,
        frequencies=tuple(float(w) for w in toy.omega),
        x0=config.x0 if config.x0 is not None else toy.x0,
        plan=plan,
    )


# ----------------------------------------------------------------------
# Summary
# ----------------------------------------------------------------------


@dataclass
class RunSummary:
    """Outcome of one run: echoed config, headline metrics and artifact digests."""
    command: str
    success: bool
    config: dict[str, Any]
    metrics: dict[str, Any] = field(default_factory=dict)
    monitor_counts: dict[str, int] = field(default_factory=dict)
    hard_violations: int = 0
    artifacts: list[dict[str, Any]] = field(default_factory=list)
    numerics: dict[str, Any] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        if self.hard_violations or not self.success:
            return 1
        return 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "success": self.success,
            "config": self.config,
            "metrics": self.metrics,
            "monitor_counts": self.monitor_counts,
            "hard_violations": self.hard_violations,
            "artifacts": self.artifacts,
            "numerics": self.numerics,
            "errors": self.errors,
            "exit_code": self.exit_code,
        }
