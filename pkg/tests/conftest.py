import numpy as np
import pytest

from grrm.finite import make_space, product_space
from grrm.transitions import BINARY_LABELS


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long experiment checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def features():
    return make_space(["a", "b"])


@pytest.fixture
def labels():
    return BINARY_LABELS


@pytest.fixture
def test_space(features, labels):
    return product_space(features, labels)


@pytest.fixture
def small_samples():
    return [("a", 1), ("a", 1), ("b", -1), ("a", -1)]
