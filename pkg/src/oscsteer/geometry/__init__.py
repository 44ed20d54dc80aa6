"""Limit-shape support function and finite-horizon reachable sets."""

from oscsteer.geometry.support import SupportGeometry, SupportMethod
