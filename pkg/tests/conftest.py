import numpy as np
import pytest

from erspin import cavity
from erspin.levels import build_level_scheme, list_transitions


@pytest.fixture(scope="session")
def table():
    return list_transitions(build_level_scheme())


@pytest.fixture(scope="session")
def decay(table):
    return cavity.decay_matrix(table, cavity.CavityParams(), cavity.BranchingModel())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
