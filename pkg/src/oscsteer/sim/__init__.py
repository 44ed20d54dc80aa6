"""Closed-loop simulation, minimum-time oracle and studies."""

from oscsteer.sim.integrator import Scenario, Simulator, Trajectory
