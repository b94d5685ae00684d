import warnings

import pytest
from hypothesis import HealthCheck, settings

from gradslice.profile import MachineProfile
from gradslice.toolpath import PrintSettings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

V_960 = 68.56      # mm^3 of dead volume giving ~960 mm of look-ahead at h=0.2, w=0.4


@pytest.fixture
def print_settings():
    return PrintSettings()


@pytest.fixture
def mix_profile():
    return MachineProfile(syntax="mix", v_melt=V_960)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
