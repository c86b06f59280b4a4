import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from critzone.models import ComfortBounds, VehicleParams  # noqa: E402

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

_criteria: dict[str, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def comfort():
    return ComfortBounds()


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.outcome == "passed" else "FAIL"
        _criteria[name] = (verdict, _reason(report) if report.failed else "")


def _reason(report) -> str:
    lines = report.longreprtext.splitlines()
    errors = [line[1:].strip() for line in lines if line.startswith("E ")]
    return errors[0] if errors else (lines[-1] if lines else "")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        verdict, why = _criteria[name]
        line = f"{verdict}  {name}"
        if why:
            line += f"  ({why.strip()[:160]})"
        terminalreporter.write_line(line)
