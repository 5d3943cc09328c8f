# conftest.py

import pytest

from models.schemas import UncertaintyBox
from sdi.basis import build_basis, gauss_rule
from sdi.systems import PendulumSystem


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run tests marked slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-cell sweeps and full-size runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def basis4():
    return build_basis(4, 1)


@pytest.fixture
def rule9():
    return gauss_rule(9, 1)


@pytest.fixture
def pendulum():
    return PendulumSystem()


@pytest.fixture
def pendulum_box():
    return UncertaintyBox.from_bounds((2.25, 2.75))
