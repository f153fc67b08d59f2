import pytest

from conical_ke.radial import RadialGrid, build_background

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def bg():
    return build_background(RadialGrid(8192))


@pytest.fixture(scope="session")
def bg_coarse():
    return build_background(RadialGrid(2048))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
