"""Linear feedback and change of basis to the canonical chain."""

from oscsteer.canonical.brunovsky import CanonicalTransform, build_transform
