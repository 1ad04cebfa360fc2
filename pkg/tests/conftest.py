import numpy as np
import pytest

from cqedsim.config import table1_device
from cqedsim.dynamics import FluxLookup, HilbertSpace


@pytest.fixture(scope="session")
def loaded():
    return table1_device()


@pytest.fixture(scope="session")
def dev(loaded):
    return loaded.device


@pytest.fixture(scope="session")
def space_small():
    return HilbertSpace(3, 5)


@pytest.fixture(scope="session")
def lookup3(dev):
    """Shared flux lookup for n_q = 3 dynamics (1 s to build)."""
    return FluxLookup(dev.transmon, 3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
