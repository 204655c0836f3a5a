import numpy as np
import pytest

from fringetries.source import SourceDistribution, uniform
from fringetries.trees import KeySet

FIVE_KEYS = ["1000", "1001", "1010", "1100", "1101"]


@pytest.fixture
def binary():
    return SourceDistribution((0.5, 0.5))


@pytest.fixture
def skewed():
    return SourceDistribution((0.3, 0.7))


@pytest.fixture
def ternary():
    return uniform(3)


@pytest.fixture(params=["binary", "skewed", "ternary"])
def any_source(request):
    return request.getfixturevalue(request.param)


@pytest.fixture
def five_keys():
    return KeySet.from_strings(FIVE_KEYS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
