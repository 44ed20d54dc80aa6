"""Dual solve for the momentum, the radius function rho and the basic control."""

from oscsteer.momentum.engine import MomentumEngine
