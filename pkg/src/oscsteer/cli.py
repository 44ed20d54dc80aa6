"""oscsteer CLI: scenario runs, studies, exact tables and verification.

Usage:
    python -m oscsteer.cli toy --out runs/toy
    python -m oscsteer.cli simulate config/scenarios/two_oscillators.json
    python -m oscsteer.cli simulate --frequencies 1 "sqrt(2)" --x0 3 0 -1 0.5 --out runs/n2
    python -m oscsteer.cli ratio-study --frequencies 1 --levels 50 200 800 --samples 5 --workers 4
    python -m oscsteer.cli tables --dim 4
    python -m oscsteer.cli verify --quick
    python -m oscsteer.cli --set numerics.simulation.dt=0.0005 convergence --dt 1e-3 5e-4 2.5e-4 --eps 1e-2 5e-3 2.5e-3

Exit codes: 0 ok, 1 failed run or hard monitor violation, 2 usage,
parse or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional

from oscsteer.errors import OscSteerError, ParseError, ValidationError
from oscsteer.models.run import Command, parse_config
from oscsteer.persistence.artifacts import json_document
from oscsteer.policy.resolver import NumericsResolver
from oscsteer.service import SteeringService

DEFAULT_CONFIG = Path(__file__).resolve().parents[2] / "config"

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_USAGE = 2


def _frequency(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _flag_overrides(args: argparse.Namespace) -> list[str]:
    """Translate subcommand flags into dotted overrides; flags win over the file."""
    mapping = {
        "frequencies": "frequencies",
        "x0": "x0",
        "out": "output_dir",
        "seed": "seed",
        "levels": "study.levels",
        "samples": "study.samples",
        "workers": "study.workers",
        "rho_level": "study.rho_level",
        "n_inits": "study.n_inits",
        "horizon": "study.horizon",
        "stall_tol": "study.stall_tol",
        "rho_start": "study.rho_start",
        "rho_stop": "study.rho_stop",
        "dt_list": "study.dt_list",
        "eps_list": "study.eps_list",
        "dim": "study.dim",
        "r_switch": "plan.r_switch",
        "terminal_entry": "plan.terminal_entry",
    }
    out = []
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if attr == "frequencies":
            value = [_frequency(v) for v in value]
        elif attr == "out":
            value = str(value)
        out.append(f"{key}={json.dumps(value)}")
    if getattr(args, "quick", False):
        out.append("study.quick=true")
    return out


def cmd_run(args: argparse.Namespace) -> int:
    resolver = NumericsResolver.from_config_dir(args.config)
    overrides = list(args.set or []) + _flag_overrides(args)
    config = parse_config(args.scenario, resolver, overrides, command=args.command)
    summary = SteeringService(resolver).run(config)
    if args.json:
        print(json_document(summary.to_dict()), end="")
    else:
        for line in summary.lines:
            print(line)
    for error in summary.errors:
        print(f"error: {error}", file=sys.stderr)
    if summary.hard_violations:
        print(f"hard monitor violations: {summary.hard_violations}", file=sys.stderr)
    return summary.exit_code


def cmd_check_invariants(args: argparse.Namespace) -> int:
    """Run the config invariant gate."""
    tools_dir = Path(__file__).resolve().parents[2] / "tools"
    sys.path.insert(0, str(tools_dir))
    from check_invariants import check
    return check(args.config)


def _add_frequencies(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--frequencies", nargs="+", required=required,
                   help="Eigenfrequencies; numbers or expressions such as sqrt(2)")


def _add_study(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", type=int, help="Random starts per level")
    p.add_argument("--workers", type=int, help="Parallel workers (default from numerics.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oscsteer",
        description="Three-stage time-optimal steering of oscillators under one bounded control",
    )
    parser.add_argument("--config", type=Path, default=DEFAULT_CONFIG,
                        help="Path to config directory (default: config/)")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Root log level")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="Dotted override applied to the run config, e.g. numerics.simulation.dt=5e-4")
    sub = parser.add_subparsers(dest="command")

    def run_parser(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", nargs="?", type=Path, help="Run config JSON")
        p.add_argument("--out", type=Path, help="Output directory for artifacts")
        p.add_argument("--seed", type=int, help="Random seed")
        p.add_argument("--json", action="store_true", help="Print the summary document")
        p.set_defaults(handler=cmd_run)
        return p

    p_sim = run_parser(Command.SIMULATE.value, "Simulate the closed loop from x0")
    _add_frequencies(p_sim)
    p_sim.add_argument("--x0", nargs="+", type=float, help="Initial state x1 y1 ... xN yN")
    p_sim.add_argument("--r-switch", dest="r_switch", type=float, help="Middle-zone radius")
    p_sim.add_argument("--terminal-entry", dest="terminal_entry", choices=["ellipsoid", "time_scale"])

    p_toy = run_parser(Command.TOY.value, "Single oscillator preset")
    p_toy.add_argument("--x0", nargs="+", type=float, help="Initial state (default 10 0)")

    p_ratio = run_parser(Command.RATIO_STUDY.value, "rho/T (and tau/T for one oscillator) per level")
    _add_frequencies(p_ratio)
    p_ratio.add_argument("--levels", nargs="+", type=float, help="rho levels")
    _add_study(p_ratio)

    p_decay = run_parser(Command.DECAY_STUDY.value, "Stage-one rho decay rate")
    _add_frequencies(p_decay)
    p_decay.add_argument("--rho-start", dest="rho_start", type=float)
    p_decay.add_argument("--rho-stop", dest="rho_stop", type=float)
    _add_study(p_decay)

    p_attr = run_parser(Command.ATTRACTOR_SCAN.value, "Stall search under the basic control")
    _add_frequencies(p_attr)
    p_attr.add_argument("--rho-level", dest="rho_level", type=float)
    p_attr.add_argument("--n-inits", dest="n_inits", type=int)
    p_attr.add_argument("--horizon", type=float)
    p_attr.add_argument("--stall-tol", dest="stall_tol", type=float)
    p_attr.add_argument("--workers", type=int)

    p_conv = run_parser(Command.CONVERGENCE.value, "(dt, eps) refinement study")
    _add_frequencies(p_conv)
    p_conv.add_argument("--x0", nargs="+", type=float)
    p_conv.add_argument("--dt", dest="dt_list", nargs="+", type=float)
    p_conv.add_argument("--eps", dest="eps_list", nargs="+", type=float)
    p_conv.add_argument("--workers", type=int)

    p_tables = run_parser(Command.TABLES.value, "Exact q, Q and Cfrak")
    p_tables.add_argument("--dim", type=int, help="Canonical dimension (default 4)")

    p_verify = run_parser(Command.VERIFY.value, "Oracle suite with pass/fail per item")
    p_verify.add_argument("--quick", action="store_true", help="Reduced random samples")

    p_inv = sub.add_parser("check-invariants", help="Validate config/numerics.json and presets.json")
    p_inv.set_defaults(handler=cmd_check_invariants)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")

    if args.command is None:
        parser.print_help()
        return EXIT_OK

    try:
        return args.handler(args)
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OscSteerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
