"""Shared fixtures: the shipped config directory and a resolver over it."""

from pathlib import Path

import pytest

from oscsteer.policy.resolver import NumericsResolver

CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture
def resolver() -> NumericsResolver:
    return NumericsResolver.from_config_dir(CONFIG_DIR)
