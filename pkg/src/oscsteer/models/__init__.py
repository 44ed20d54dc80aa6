"""Core data models: oscillator system, states, momenta."""

from oscsteer.models.system import MomentumVector, OscillatorSystem, PhaseState
