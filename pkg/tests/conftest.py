import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nfbeam.beamformer_freq import BeamformerConfig
from nfbeam.sampling import nearly_uniform_sphere

settings.register_profile("nfbeam", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nfbeam")

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def geometry():
    return nearly_uniform_sphere(36, 0.08)


@pytest.fixture(scope="session")
def config():
    return BeamformerConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
