import numpy as np
import pytest
from hypothesis import settings

import pulseswitch as ps

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def lin():
    m = ps.linear_test()
    return m, ps.target_spectrum(m, "origin")


@pytest.fixture(scope="session")
def rep():
    m = ps.repressilator()
    return m, ps.target_spectrum(m, "upper")


@pytest.fixture(scope="session")
def fhn():
    m = ps.fitzhugh_nagumo()
    return m, ps.target_spectrum(m, "rest")


@pytest.fixture(scope="session")
def x_low(rep):
    return rep[1].others[0].copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def verdicts(request):
    """Collects one PASS/FAIL line per acceptance criterion."""
    if not hasattr(request.config, "_verdicts"):
        request.config._verdicts = []
    return request.config._verdicts


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_verdicts", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
