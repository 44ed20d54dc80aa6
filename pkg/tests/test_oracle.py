"""Tests for the single-oscillator minimum-time oracle."""

import math

import numpy as np
import pytest

from oscsteer.errors import NotToyCase, ValidationError
from oscsteer.models.system import OscillatorSystem
from oscsteer.sim.oracle import (
    BangArc,
    optimal_synthesis,
    optimal_time_n1,
    replay,
    switching_curve,
    switching_value,
)

TOY = OscillatorSystem.from_values([1])


class TestSwitchingCurve:
    def test_semicircles(self) -> None:
        assert switching_curve(1.0) == pytest.approx(-1.0)
        assert switching_curve(-1.0) == pytest.approx(1.0)
        assert switching_curve(3.0) == pytest.approx(-1.0)
        assert switching_curve(2.0) == pytest.approx(0.0)

    def test_odd_symmetry(self) -> None:
        xs = np.linspace(-7.0, 7.0, 57)
        np.testing.assert_allclose(switching_curve(xs), -switching_curve(-xs), atol=1e-15)

    def test_value_sign(self) -> None:
        assert switching_value(1.0, 0.0) > 0.0
        assert switching_value(1.0, -2.0) < 0.0


class TestOptimalTime:
    @pytest.mark.parametrize("x0, expected", [
        ((2.0, 0.0), math.pi),
        ((4.0, 0.0), 2 * math.pi),
        ((10.0, 0.0), 5 * math.pi),
        ((-4.0, 0.0), 2 * math.pi),
        ((1.0, -1.0), math.pi / 2),
    ])
    def test_known_times(self, x0: tuple, expected: float) -> None:
        assert optimal_time_n1(TOY, x0) == pytest.approx(expected, rel=1e-9)

    def test_origin(self) -> None:
        assert optimal_time_n1(TOY, (0.0, 0.0)) == 0.0

    def test_arcs_replay_to_origin(self) -> None:
        for x0 in ((4.0, 0.0), (3.0, 2.5), (-6.5, -1.0)):
            synth = optimal_synthesis(x0)
            assert sum(a.duration for a in synth.arcs) == pytest.approx(synth.time)
            np.testing.assert_allclose(replay(x0, synth.arcs), [0.0, 0.0], atol=1e-8)
            assert all(abs(a.u) == 1.0 for a in synth.arcs)

    def test_bang_arcs_alternate(self) -> None:
        synth = optimal_synthesis((10.0, 0.0))
        assert synth.switches == len(synth.arcs) - 1
        for a, b in zip(synth.arcs, synth.arcs[1:]):
            assert a.u == -b.u

    def test_no_faster_than_energy_bound(self) -> None:
        x0 = (7.0, 3.0)
        assert optimal_time_n1(TOY, x0) >= math.hypot(*x0) - 1e-9

    def test_needs_unit_frequency(self) -> None:
        with pytest.raises(NotToyCase):
            optimal_time_n1(OscillatorSystem.from_values([2]), (1.0, 0.0))
        with pytest.raises(NotToyCase):
            optimal_time_n1(OscillatorSystem.from_values([1, 2]), (1.0, 0.0, 0.0, 0.0))

    def test_replay_rejects_inadmissible_control(self) -> None:
        with pytest.raises(ValidationError):
            replay((1.0, 0.0), [BangArc(2.0, 1.0)])
