#!/usr/bin/env python3
"""oscsteer invariant checks against the shipped numerics and presets."""

import json
import math
import sys
from pathlib import Path


ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = ROOT / "config"


def load_json(path: Path) -> dict:
    with path.open("r", encoding="utf-8") as handle:
        return json.load(handle)


def _is_power_of_two(value: int) -> bool:
    return isinstance(value, int) and value > 0 and value & (value - 1) == 0


def check_positive(section: dict, label: str, keys: tuple, errors: list[str]) -> None:
    for key in keys:
        value = section.get(key)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
            errors.append(f"{label}.{key} must be > 0, got {value!r}")


def check(config_dir: Path = CONFIG_DIR) -> int:
    numerics = load_json(config_dir / "numerics.json")
    presets = load_json(config_dir / "presets.json")
    errors: list[str] = []

    for name, doc in (("numerics", numerics), ("presets", presets)):
        if "version" not in doc:
            errors.append(f"{name}.json missing version")

    # --- Quadrature budgets ---
    quad = numerics["quadrature"]
    for n, nodes in quad["torus_nodes"].items():
        if not _is_power_of_two(nodes):
            errors.append(f"quadrature.torus_nodes[{n}] must be a power of two, got {nodes}")
    check_positive(quad, "quadrature", (
        "monte_carlo_samples", "monte_carlo_batch", "bessel_truncation_factor",
        "bessel_panel_nodes", "finite_support_nodes_per_period",
    ), errors)
    if not 2 <= quad["monte_carlo_min_n"] <= 4:
        errors.append(f"quadrature.monte_carlo_min_n must lie in [2, 4], got {quad['monte_carlo_min_n']}")
    if quad["monte_carlo_samples"] < 10_000_000:
        errors.append(f"quadrature.monte_carlo_samples must be >= 1e7, got {quad['monte_carlo_samples']}")

    # --- Tolerances ---
    check_positive(numerics["geometry"], "geometry", ("singular_rel_tol", "fd_step", "default_tol", "resonance_tol"),
                   errors)
    check_positive(numerics["dual_solver"], "dual_solver", ("tol", "max_iter", "initial_step"), errors)
    shrink = numerics["dual_solver"]["backtrack_shrink"]
    if not 0.0 < shrink < 1.0:
        errors.append(f"dual_solver.backtrack_shrink must lie in (0, 1), got {shrink}")
    check_positive(numerics["terminal"], "terminal", ("time_scale_rtol", "max_bracket_steps", "max_dim"), errors)
    if numerics["terminal"]["max_dim"] % 2:
        errors.append("terminal.max_dim must be even (2n for n oscillators)")
    check_positive(numerics["zones"], "zones", ("theta_rtol", "condition_a_directions"), errors)

    # --- Simulation defaults ---
    sim = numerics["simulation"]
    check_positive(sim, "simulation", (
        "dt", "eps_sign", "t_max", "sample_stride", "stall_window", "stall_tol",
        "terminal_steps_per_tfrak", "event_bisection_steps",
    ), errors)
    if not sim["dt"] < sim["eps_sign"]:
        errors.append(f"simulation.dt ({sim['dt']}) must be < simulation.eps_sign ({sim['eps_sign']})")
    if not 0.0 < sim["arrival_fraction"] < 1.0:
        errors.append(f"simulation.arrival_fraction must lie in (0, 1), got {sim['arrival_fraction']}")
    if sim["terminal_entry"] not in ("ellipsoid", "time_scale"):
        errors.append(f"simulation.terminal_entry unknown: {sim['terminal_entry']!r}")

    # --- Toy preset ---
    toy = presets.get("toy", {})
    if toy.get("omega") != [1]:
        errors.append(f"toy.omega must be [1], got {toy.get('omega')!r}")
    if toy.get("x0") != [10.0, 0.0]:
        errors.append(f"toy.x0 must be [10.0, 0.0], got {toy.get('x0')!r}")
    if toy.get("r_switch") != 2.0 or toy.get("r_switch_kind") != "euclidean":
        errors.append("toy r_switch must be 2.0 in euclidean units")

    general = presets.get("general", {})
    if general.get("r_switch_rule") != "4*max(omega^-2)*sqrt(n)":
        errors.append(f"general.r_switch_rule unsupported: {general.get('r_switch_rule')!r}")
    max_n = general.get("max_n", 0)
    if not 1 <= max_n or 2 * max_n > numerics["terminal"]["max_dim"]:
        errors.append("general.max_n must be >= 1 with 2 * max_n <= terminal.max_dim")
    if not math.isfinite(float(sim["t_max"])):
        errors.append("simulation.t_max must be finite")

    if errors:
        print("Invariant check failed:")
        for err in errors:
            print(f"- {err}")
        return 1

    print("Invariant check passed.")
    return 0


if __name__ == "__main__":
    raise SystemExit(check(Path(sys.argv[1]) if len(sys.argv) > 1 else CONFIG_DIR))
