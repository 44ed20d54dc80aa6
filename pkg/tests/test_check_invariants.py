"""Tests for the config invariant gate: proves the shipped config passes
and a broken numerics file is rejected."""

import json
import shutil
import sys
from pathlib import Path

from tests.conftest import CONFIG_DIR

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tools"))

from check_invariants import check  # noqa: E402


def _copy_config(tmp_path: Path) -> Path:
    target = tmp_path / "config"
    shutil.copytree(CONFIG_DIR, target)
    return target


def _edit_numerics(config_dir: Path, section: str, key: str, value) -> None:
    path = config_dir / "numerics.json"
    doc = json.loads(path.read_text())
    doc[section][key] = value
    path.write_text(json.dumps(doc))


class TestCheckInvariants:
    def test_shipped_config_passes(self) -> None:
        assert check(CONFIG_DIR) == 0

    def test_step_not_below_sign_band(self, tmp_path: Path, capsys) -> None:
        config_dir = _copy_config(tmp_path)
        _edit_numerics(config_dir, "simulation", "dt", 0.02)
        assert check(config_dir) == 1
        assert "eps_sign" in capsys.readouterr().out

    def test_negative_horizon(self, tmp_path: Path) -> None:
        config_dir = _copy_config(tmp_path)
        _edit_numerics(config_dir, "simulation", "t_max", -1.0)
        assert check(config_dir) == 1

    def test_monte_carlo_sample_floor(self, tmp_path: Path, capsys) -> None:
        config_dir = _copy_config(tmp_path)
        _edit_numerics(config_dir, "quadrature", "monte_carlo_samples", 4_000_000)
        assert check(config_dir) == 1
        assert "monte_carlo_samples" in capsys.readouterr().out

    def test_monte_carlo_switch_dimension(self, tmp_path: Path, capsys) -> None:
        config_dir = _copy_config(tmp_path)
        _edit_numerics(config_dir, "quadrature", "monte_carlo_min_n", 5)
        assert check(config_dir) == 1
        assert "monte_carlo_min_n" in capsys.readouterr().out

    def test_cli_wrapper(self, tmp_path: Path) -> None:
        from oscsteer.cli import main
        config_dir = _copy_config(tmp_path)
        _edit_numerics(config_dir, "simulation", "dt", 0.02)
        assert main(["--config", str(config_dir), "check-invariants"]) == 1
