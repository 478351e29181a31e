import re

import pytest

from hydrohybrid.simulation import run_scenario, scenario_a, scenario_b

_CRITERIA: dict[int, tuple[str, str]] = {}
_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    n, label = int(m.group(1)), m.group(2).replace("_", " ")
    if report.when == "call" or report.outcome != "passed":
        prev = _CRITERIA.get(n, (label, "PASS"))[1]
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        _CRITERIA[n] = (label, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        label, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} ({label}): {status}")


@pytest.fixture(scope="session")
def log_a():
    return run_scenario(scenario_a())


@pytest.fixture(scope="session")
def log_b():
    return run_scenario(scenario_b())
