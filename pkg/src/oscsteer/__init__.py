"""Asymptotically time-optimal three-stage feedback for oscillators under one bounded control."""

__version__ = "0.1.0"
