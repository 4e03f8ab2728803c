import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_H = 0.25


@pytest.fixture(scope="session")
def sweep():
    """Scenario results at the acceptance resolution, computed on first use."""
    from blindacoustics.reproduce import Sweep

    return Sweep(h=ACCEPTANCE_H)
