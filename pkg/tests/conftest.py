import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from codipas.game import GameSpec, NoiseModel

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

M = [[5.0, 2.0], [1.0, 3.0]]


@pytest.fixture
def security_game():
    return GameSpec(M)


@pytest.fixture
def noisy_security_game():
    return GameSpec(M, noise=NoiseModel.uniform(-1, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
