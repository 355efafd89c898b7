import pytest

from simcap.config import SystemConfig
from simcap.scene import build_scene

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def default_config() -> SystemConfig:
    return SystemConfig()


@pytest.fixture(scope="session")
def default_scene(default_config):
    return build_scene(default_config)


@pytest.fixture(scope="session")
def small_config() -> SystemConfig:
    return SystemConfig(n_t=4, n_r=4, m_tx=12, n_rx=16, layers_tx=2, layers_rx=3)


@pytest.fixture(scope="session")
def small_scene(small_config):
    return build_scene(small_config)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
