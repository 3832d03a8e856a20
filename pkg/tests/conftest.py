import numpy as np
import pytest

from hazenet import set_debug_checks


@pytest.fixture(autouse=True)
def _debug_checks():
    # every op output is checked for NaN/Inf while unit tests run
    prev = set_debug_checks(True)
    yield
    set_debug_checks(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
