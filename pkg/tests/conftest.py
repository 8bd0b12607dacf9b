import hypothesis
import numpy as np
import pytest

from extremes.base_distributions import make_model
from extremes.pgf_core import make_pgf

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def unit_grid():
    return np.linspace(0.0, 1.0, 1001)


@pytest.fixture
def exponential():
    return make_model("exponential", {"lambda": 0.01})


@pytest.fixture
def unit_exponential():
    return make_model("exponential", {"lambda": 1.0})


@pytest.fixture
def log95():
    return make_pgf("logarithmic", p=0.95)
