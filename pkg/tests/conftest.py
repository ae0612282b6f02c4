import pytest

from fracising.couplings import build_table, periodic_table
from fracising.lattice import ClassicalModel, Geometry


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow Monte Carlo tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def chain_model(q, L, j0=1.0, h=0.0):
    return ClassicalModel(periodic_table(build_table(q, L), L), j0, h)


def grid_model(q, lx, ktau, j0=1.0, h=0.0):
    return ClassicalModel(periodic_table(build_table(q, lx), lx), j0, h, ktau=ktau)


@pytest.fixture
def nearest_neighbour_chain():
    """q = 2 chain of four sites: plain nearest-neighbour Ising ring."""
    return chain_model(2.0, 4), Geometry.chain(4)


@pytest.fixture
def make_chain():
    return chain_model


@pytest.fixture
def make_grid():
    return grid_model
