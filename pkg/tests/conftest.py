"""Shared fixtures: the default model, the family of periodic waves and two members."""
import pytest

from rollwaves.model import ModelParams
from rollwaves.orbit import QClosure, continue_family, hopf_family_seed

U_MINUS = 0.96
X_MAX = 30.0

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def params():
    return ModelParams(F=6.0, nu=0.1, r=2.0, s=0.0)


@pytest.fixture(scope="session")
def closure():
    return QClosure.endstate(U_MINUS)


@pytest.fixture(scope="session")
def family(params, closure):
    seed = hopf_family_seed(params, closure)
    return continue_family(seed, X_MAX, closure)


@pytest.fixture(scope="session")
def wave62(family):
    return family.at_period(6.2, n=None)


@pytest.fixture(scope="session")
def wave45(family):
    return family.at_period(4.5, n=None)


@pytest.fixture(scope="session")
def whitham62(wave62):
    from rollwaves.whitham import whitham_jacobians
    return whitham_jacobians(wave62)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
