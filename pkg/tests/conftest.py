import pytest

from forcedwave.model import ModelParams
from forcedwave.shift import ShiftProfile

PSET_A = ModelParams(d=1, r1=1, r2=2, r3=1, a=2, b=0.1, h=0.5, k=1.5)
PSET_B = PSET_A.replace(r2=3)
PSET_C = ModelParams(d=1, r1=1, r2=1, r3=1, a=3, b=0.02, h=0.5, k=1.5)


@pytest.fixture
def pset_a():
    return PSET_A


@pytest.fixture
def pset_b():
    return PSET_B


@pytest.fixture
def pset_c():
    return PSET_C


@pytest.fixture
def shift():
    # rho >= lambda_u and >= lambda_star, so the envelope rate never binds
    return ShiftProfile.sigmoid(m=2.0, rho=1.5)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
