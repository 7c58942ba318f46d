from dataclasses import replace

import numpy as np
import pytest

from conftest import make_estimate
from contagion_fit.calibrate import (
    FitConfig,
    InnerConfig,
    alternate_fit,
    build_utility,
    fit_local,
    fit_universal,
    initial_locals,
    residuals,
    with_overrides,
)
from contagion_fit.dataio import EstimatedPrevalence
from contagion_fit.integrator import integrate
from contagion_fit.model import Constant, CountryParams, UniversalParams

YEARS = np.arange(1920, 2010)
TRUTH = UniversalParams(1.0, 0.998)


def _country(cid, a, x0, u0, u_inf):
    return CountryParams(a=a, x0=x0, u0=u0, u_inf=u_inf, t0=1920.0)


@pytest.fixture(scope="module")
def two_countries():
    from contagion_fit.dataio import bundled_articles

    arts = bundled_articles()
    truth = {1: _country(1, 1.05, 0.05, 0.52, 0.48), 2: _country(2, 0.97, 0.08, 0.51, 0.47)}
    data = {c: make_estimate(p, TRUTH, arts, YEARS, cid=c) for c, p in truth.items()}
    return arts, truth, data


def test_residual_jacobian_forward_vs_central(two_countries):
    # finite differences are smooth because integration restarts at every article year
    arts, truth, data = two_countries
    p = truth[1]

    def r(a):
        q = replace(p, a=a)
        return residuals(q, TRUTH, build_utility("discounted", q, TRUTH, arts), data[1])

    h = 1e-6
    central = (r(p.a + h) - r(p.a - h)) / (2 * h)
    forward = (r(p.a + 1e-7) - r(p.a)) / 1e-7
    assert np.max(np.abs(forward - central)) < 1e-4 * np.max(np.abs(central))


def test_zero_noise_local_fit_reaches_truth(two_countries):
    arts, truth, data = two_countries
    start = replace(truth[1], a=1.0, u0=0.51, u_inf=0.49)
    p, cost, status = fit_local(data[1], TRUTH, start, "discounted", arts)
    assert cost < 1e-8
    assert p.a == pytest.approx(1.05, abs=5e-3)


def test_universal_fit_recovers_b_and_delta(two_countries):
    arts, truth, data = two_countries
    u, cost, status = fit_universal(data, truth, UniversalParams(0.9, 0.9985), "discounted", arts)
    assert cost < 1e-10
    assert u.b == pytest.approx(1.0, abs=1e-4)
    assert u.delta == pytest.approx(0.998, abs=1e-5)


def test_alternating_fit_monotone_and_bounded(two_countries):
    arts, _, data = two_countries
    cfg = FitConfig(max_itn=4)
    res = alternate_fit(data, "discounted", arts, cfg)
    Es = [h["E"] for h in res.history]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(Es, Es[1:]))
    assert res.total_error <= Es[0]
    for p in res.locals.values():
        assert 0 <= p.a <= 2 and 0 <= p.x0 <= 1 and 0 <= p.u0 <= 1 and 0 <= p.u_inf <= 1
    assert 0 <= res.universal.b <= 2 and 0 <= res.universal.delta <= 1
    assert res.outer_iterations == 4 and res.converged_by == "max_itn"


def test_fit_ignores_dataset_order(two_countries):
    arts, _, data = two_countries
    cfg = FitConfig(max_itn=2)
    a = alternate_fit(data, "discounted", arts, cfg)
    b = alternate_fit(dict(reversed(list(data.items()))), "discounted", arts, cfg)
    assert a.total_error == b.total_error
    assert a.universal == b.universal


def test_constant_law_fits_constant_data():
    truth = CountryParams(a=1.02, x0=0.05, u0=0.53, u_inf=0.53, t0=1920.0)
    u = UniversalParams(1.0, 1.0)
    x = integrate(truth, u, Constant(0.53), YEARS).values
    data = {1: EstimatedPrevalence(1, YEARS, x, None, True)}
    res = alternate_fit(data, "constant", None, FitConfig(max_itn=20, tol=1e-12))
    assert res.total_error < 1e-8


def test_step_law_bounds_t_star(two_countries):
    _, _, data = two_countries
    p = initial_locals(data[1], "step", FitConfig())
    assert p.t_star == pytest.approx(0.5 * (1920 + 2009))
    res = alternate_fit({1: data[1]}, "step", None, FitConfig(max_itn=2))
    assert 1920 <= res.locals[1].t_star <= 2009


def test_parallel_matches_serial(two_countries):
    arts, _, data = two_countries
    cfg = FitConfig(max_itn=1)
    a = alternate_fit(data, "discounted", arts, cfg)
    b = alternate_fit(data, "discounted", arts, replace(cfg, workers=2))
    assert a.total_error == b.total_error


def test_config_validation_and_overrides():
    with pytest.raises(ValueError):
        FitConfig(tol=0)
    with pytest.raises(ValueError):
        FitConfig(initial={"a": 3.0, "b": 1.0, "delta": 0.9, "u0": 0.5, "u_inf": 0.5})
    cfg = with_overrides(FitConfig(), tol=1e-3, max_itn=None)
    assert cfg.tol == 1e-3 and cfg.max_itn == 150


def test_discounted_needs_articles(two_countries):
    _, truth, _ = two_countries
    with pytest.raises(ValueError):
        build_utility("discounted", truth[1], TRUTH, None)
    with pytest.raises(ValueError):
        build_utility("quadratic", truth[1], TRUTH, None)


def test_nan_estimate_rejected():
    bad = EstimatedPrevalence(1, YEARS, np.full(len(YEARS), np.nan), None, False)
    with pytest.raises(ValueError):
        alternate_fit({1: bad}, "constant")
