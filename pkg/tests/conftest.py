"""Shared fixtures and the --runslow switch."""

import numpy as np
import pytest
import structlog

from src.shared.config import load_train_config
from src.shared.schemas import TrainConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run training-based acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: training-based acceptance checks (run with --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def reset_logging():
    """Undo configure_logging calls made by CLI tests."""
    yield
    structlog.reset_defaults()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk_config() -> TrainConfig:
    """Smallest network the shape rules allow: m = 1/8 at 64×128."""
    return load_train_config(preset="desk", overrides={"batch_size": 1, "iterations": 20})


@pytest.fixture
def golden_config() -> TrainConfig:
    return load_train_config(
        preset="desk",
        overrides={
            "width_multiplier": 1,
            "height": 384,
            "width": 768,
            "max_displacement": 40,
            "fine_displacement": 10,
            "stack_count": 3,
        },
    )
