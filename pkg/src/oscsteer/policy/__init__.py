"""Policy resolution: numerics.json and presets.json as typed policies."""

from oscsteer.policy.resolver import NumericsResolver
