import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance tests attach a one-line verdict through ``record_property``;
# the lines are gathered here and printed after the run
_verdicts = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _verdicts.extend(v for k, v in report.user_properties if k == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_verdicts, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
