import os

import pytest

ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption(
        "--long-running",
        action="store_true",
        default=False,
        help="run full-scale ML-KEM BP reproduction criteria",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "long_running: full-scale BP runs (minutes to hours)")


def long_running_enabled(config) -> bool:
    return config.getoption("--long-running") or os.environ.get("SASCA_LONG_RUNNING") == "1"


@pytest.fixture
def long_running(request):
    return long_running_enabled(request.config)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
