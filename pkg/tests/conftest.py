import warnings

import pytest

from jdpd_lab.circuit import JdpdParams, double_well_minimum


def pytest_configure(config):
    warnings.filterwarnings("ignore", message=".*TBB.*")
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def params():
    return JdpdParams()


@pytest.fixture(scope="session")
def phi_star(params):
    return double_well_minimum(params)


@pytest.fixture
def record(request):
    """Record one acceptance line: record(number, passed, detail)."""
    lines = request.config._acceptance_lines

    def _record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
