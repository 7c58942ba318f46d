import numpy as np
import pytest

from contagion_fit.dataio import EstimatedPrevalence, bundled_articles
from contagion_fit.integrator import IntegratorConfig, integrate
from contagion_fit.model import CountryParams, Discounted, UniversalParams

# acceptance lines collected during the run and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def articles():
    return bundled_articles()


def make_estimate(params, universal, articles, years, noise=0.0, seed=0, cid=1):
    """Exact model curve (plus optional Gaussian noise) packaged as an estimate."""
    utility = Discounted(params.u0, params.u_inf, universal.delta, articles)
    x = integrate(params, universal, utility, years, IntegratorConfig(rtol=1e-10, atol=1e-12)).values
    if noise:
        x = x + np.random.default_rng(seed).normal(0.0, noise, len(years))
    return EstimatedPrevalence(cid, np.asarray(years), x, None, True)


@pytest.fixture
def usa_params():
    return CountryParams(a=0.963, x0=0.063, u0=0.513, u_inf=0.470, t0=1920.0), UniversalParams(1.049, 0.9981)
