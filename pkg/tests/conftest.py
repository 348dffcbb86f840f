import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mfgplay import shipped_instance
from mfgplay.play import compute_ne

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

LAM = 0.5


@pytest.fixture(scope="session")
def shipped():
    model = shipped_instance()
    return model, model.gram()


@pytest.fixture(scope="session")
def shipped_ne(shipped):
    model, G = shipped
    return compute_ne(model, G, LAM, 1e-10)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
