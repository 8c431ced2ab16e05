import warnings

import pytest
from hypothesis import HealthCheck, settings

from twinlev.filters import FilterModel
from twinlev.params import DerivedParams, paper_config

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def config():
    return paper_config()


@pytest.fixture
def fig3a():
    """eta_eff = 0.45, Gamma = 0.1 omega0, g = 4 omega0, omega0 = 1 rad/s."""
    return DerivedParams.from_dimensionless(1.0, 0.45, 0.1, 4.0, mass=1.0)


@pytest.fixture
def fig3a_filters(fig3a):
    return {"+": FilterModel.resonant(0.2228333, fig3a.omega_plus, 1.0),
            "-": FilterModel.resonant(0.0650588, fig3a.omega_minus, 1.0)}


@pytest.fixture(autouse=True)
def _no_stray_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        yield


# -- acceptance report ---------------------------------------------------

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def report(request, capsys):
    """Record one PASS/FAIL line per acceptance criterion and return ``ok``."""
    def emit(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_CRITERIA][number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
