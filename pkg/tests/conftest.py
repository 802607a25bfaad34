import os

import pytest
from hypothesis import HealthCheck, settings

from masscrit.grid import ProblemParams
from masscrit.shooting import compute_m1

settings.register_profile(
    "numerics", deadline=None, max_examples=25, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.register_profile("quick", deadline=None, max_examples=5, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "numerics"))

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session", params=[2, 3, 4], ids=lambda n: f"N{n}")
def params(request):
    return ProblemParams(request.param)


@pytest.fixture(scope="session")
def P2():
    return ProblemParams(2)


@pytest.fixture(scope="session")
def P3():
    return ProblemParams(3)


@pytest.fixture(scope="session")
def m1_2(P2):
    return compute_m1(P2)
