import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from secure_slp.model import draw_channels, draw_frame, make_rng

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def instance(seed, N=6, K=2, M=4, eve_correlation=None):
    """Channels and a frame drawn from independent streams of ``seed``."""
    ch = draw_channels(N, K, make_rng(seed, 0), eve_correlation)
    fr = draw_frame(K, M, make_rng(seed, 1))
    return ch, fr


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
