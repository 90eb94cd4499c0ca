import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from restart_bandits.arm import Arm, default_cost, make_structured_matrix

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def hand_arm():
    """Two states, P_1(0.5), reset to the good state, default costs."""
    return Arm(make_structured_matrix(1, 0.5, 2), np.array([1.0, 0.0]), default_cost(2))
