import numpy as np
import pytest

from skewmix import presets


@pytest.fixture(scope="session")
def doubling_cos():
    return presets.skew_product("doubling_cos")


@pytest.fixture(scope="session")
def tripling_cos():
    return presets.skew_product("tripling_cos")


@pytest.fixture(scope="session")
def coboundary():
    return presets.skew_product("coboundary")


@pytest.fixture(scope="session")
def times8_cos():
    return presets.skew_product("times8_cos")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
