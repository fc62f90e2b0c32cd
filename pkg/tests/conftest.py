import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cfarfp import scenario  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def base_cfg():
    return scenario.ScenarioConfig(n=16, k=32, seed=0)


@pytest.fixture(scope="session")
def base_real(base_cfg):
    return scenario.realize(base_cfg)
