"""Alternating fit of per-country and universal model parameters.

Each outer iteration fits every country's local parameters with the
universal ones held fixed, then fits the universal parameters (timescale and
discount factor) against all countries at once, until the total squared
error stops changing.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataio import EstimatedPrevalence
from .integrator import IntegrationError, IntegratorConfig, integrate
from .lsq import least_squares_box
from .model import ArticleSeries, Constant, CountryParams, Discounted, Step, UniversalParams, UtilityModel

log = logging.getLogger(__name__)

LAWS = ("discounted", "constant", "step")

LOCAL_NAMES = {
    "discounted": ("x0", "a", "u0", "u_inf"),
    "constant": ("x0", "a", "u"),
    "step": ("x0", "a", "u0", "u_inf", "t_star"),
}
UNIVERSAL_NAMES = {
    "discounted": ("b", "delta"),
    "constant": ("b",),
    "step": ("b",),
}

DEFAULT_BOUNDS = {
    "a": (0.0, 2.0),
    "b": (0.0, 2.0),
    "x0": (0.0, 1.0),
    "u0": (0.0, 1.0),
    "u_inf": (0.0, 1.0),
    "u": (0.0, 1.0),
    "delta": (0.0, 1.0),
}
DEFAULT_INITIAL = {"a": 1.0, "b": 1.0, "u0": 0.51, "u_inf": 0.49, "u": 0.51, "delta": 0.9985}

# delta is optimized as log(1 - delta); this caps it just short of 1
_DELTA_CEILING = 1.0 - 1e-12


class FitError(RuntimeError):
    """A country's model could not be integrated during fitting."""


@dataclass(frozen=True)
class InnerConfig:
    max_nfev: int = 200
    rel_step: float = 1e-7
    ftol: float = 1e-10


@dataclass(frozen=True)
class FitConfig:
    tol: float = 1e-6
    max_itn: int = 150
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    initial: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_INITIAL))
    inner: InnerConfig = InnerConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    workers: int = 1

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_itn < 1:
            raise ValueError("max_itn must be at least 1")
        for name, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise ValueError(f"bounds for {name} are not ordered")
            if name in self.initial and not lo <= self.initial[name] <= hi:
                raise ValueError(f"initial {name}={self.initial[name]} outside its bounds")


@dataclass
class FitResult:
    law: str
    universal: UniversalParams
    locals: dict[int, CountryParams]
    per_country_error: dict[int, float]
    total_error: float
    outer_iterations: int
    converged_by: str
    history: list[dict] = field(default_factory=list)
    inner_status: dict[int, str] = field(default_factory=dict)

    def utility_violations(self) -> list[int]:
        """Countries whose fitted utility rises with knowledge (u0 < u_inf)."""
        return [cid for cid, p in self.locals.items() if p.u0 < p.u_inf]


def build_utility(law: str, params: CountryParams, universal: UniversalParams, articles: Optional[ArticleSeries]):
    if law == "discounted":
        if articles is None:
            raise ValueError("discounted utility needs an article series")
        return Discounted(params.u0, params.u_inf, universal.delta, articles)
    if law == "constant":
        return Constant(params.u0)
    if law == "step":
        return Step(params.u0, params.u_inf, params.t_star)
    raise ValueError(f"unknown utility law {law!r}")


def residuals(
    params: CountryParams,
    universal: UniversalParams,
    utility: UtilityModel,
    data: EstimatedPrevalence,
    config: IntegratorConfig = IntegratorConfig(),
) -> np.ndarray:
    """Model prevalence minus estimated prevalence at the estimate's years."""
    try:
        traj = integrate(params, universal, utility, data.times, config)
    except IntegrationError as exc:
        raise FitError(f"country {data.country_id}: {exc}") from exc
    return traj.values - data.values


def _check_data(data: EstimatedPrevalence):
    if data.values is None or len(data.values) == 0 or not np.all(np.isfinite(data.values)):
        raise ValueError(f"country {data.country_id} has no usable prevalence estimate")


def initial_locals(data: EstimatedPrevalence, law: str, config: FitConfig) -> CountryParams:
    init = config.initial
    lo, hi = config.bounds.get("x0", (0.0, 1.0))
    x0 = min(max(float(data.values[0]), lo), hi)
    t0 = float(data.times[0])
    if law == "constant":
        u = init.get("u", 0.51)
        return CountryParams(a=init["a"], x0=x0, u0=u, u_inf=u, t0=t0)
    t_star = None
    if law == "step":
        t_star = init.get("t_star", 0.5 * (t0 + float(data.times[-1])))
    return CountryParams(a=init["a"], x0=x0, u0=init["u0"], u_inf=init["u_inf"], t0=t0, t_star=t_star)


def _local_bounds(names, data: EstimatedPrevalence, config: FitConfig):
    lo, hi = [], []
    for name in names:
        if name == "t_star":
            bounds = config.bounds.get("t_star", (float(data.times[0]), float(data.times[-1])))
        else:
            bounds = config.bounds[name]
        lo.append(bounds[0])
        hi.append(bounds[1])
    return np.array(lo), np.array(hi)


def _local_vector(p: CountryParams, names) -> np.ndarray:
    values = {"x0": p.x0, "a": p.a, "u0": p.u0, "u_inf": p.u_inf, "u": p.u0, "t_star": p.t_star}
    return np.array([values[n] for n in names], dtype=float)


def _local_from_vector(v, names, t0: float) -> CountryParams:
    d = dict(zip(names, (float(x) for x in v)))
    if "u" in d:
        d["u0"] = d["u_inf"] = d.pop("u")
    return CountryParams(a=d["a"], x0=d["x0"], u0=d["u0"], u_inf=d["u_inf"], t0=t0, t_star=d.get("t_star"))


def _delta_to_internal(delta: float) -> float:
    return math.log(1.0 - min(delta, _DELTA_CEILING))


def _delta_from_internal(z: float) -> float:
    return min(1.0, max(0.0, 1.0 - math.exp(z)))


def _universal_box(names, config: FitConfig):
    lo, hi = [], []
    for name in names:
        a, b = config.bounds[name]
        if name == "delta":
            # log(1 - delta) decreases in delta, so the ends swap
            a, b = _delta_to_internal(b), _delta_to_internal(a)
        lo.append(a)
        hi.append(b)
    return np.array(lo), np.array(hi)


def _universal_vector(u: UniversalParams, names) -> np.ndarray:
    return np.array([_delta_to_internal(u.delta) if n == "delta" else u.b for n in names])


def _universal_from_vector(z, names, current: UniversalParams) -> UniversalParams:
    d = {"b": current.b, "delta": current.delta}
    for n, v in zip(names, z):
        d[n] = _delta_from_internal(float(v)) if n == "delta" else float(v)
    return UniversalParams(d["b"], d["delta"])


def fit_local(
    data: EstimatedPrevalence,
    universal: UniversalParams,
    start: CountryParams,
    law: str = "discounted",
    articles: Optional[ArticleSeries] = None,
    config: FitConfig = FitConfig(),
) -> tuple[CountryParams, float, str]:
    """Fit one country's local parameters with ``universal`` held fixed.

    Returns the fitted parameters, their squared error and the inner solver
    status; the error never exceeds the one at ``start``.
    """
    _check_data(data)
    names = LOCAL_NAMES[law]
    lo, hi = _local_bounds(names, data, config)
    t0 = start.t0

    def fun(v):
        p = _local_from_vector(v, names, t0)
        return residuals(p, universal, build_utility(law, p, universal, articles), data, config.integrator)

    inner = config.inner
    res = least_squares_box(
        fun, _local_vector(start, names), lo, hi,
        max_nfev=inner.max_nfev, rel_step=inner.rel_step, ftol=inner.ftol,
    )
    if not res.ok:
        log.warning("country %d: local fit ended with status %s", data.country_id, res.status)
    return _local_from_vector(res.x, names, t0), res.cost, res.status


def fit_universal(
    dataset: Mapping[int, EstimatedPrevalence],
    locals_: Mapping[int, CountryParams],
    start: UniversalParams,
    law: str = "discounted",
    articles: Optional[ArticleSeries] = None,
    config: FitConfig = FitConfig(),
) -> tuple[UniversalParams, float, str]:
    """Fit the shared parameters against all countries' residuals stacked in country order."""
    names = UNIVERSAL_NAMES[law]
    lo, hi = _universal_box(names, config)
    order = sorted(dataset)

    def fun(z):
        u = _universal_from_vector(z, names, start)
        parts = [
            residuals(locals_[c], u, build_utility(law, locals_[c], u, articles), dataset[c], config.integrator)
            for c in order
        ]
        return np.concatenate(parts)

    inner = config.inner
    res = least_squares_box(
        fun, _universal_vector(start, names), lo, hi,
        max_nfev=inner.max_nfev, rel_step=inner.rel_step, ftol=inner.ftol,
    )
    if not res.ok:
        log.warning("universal fit ended with status %s", res.status)
    return _universal_from_vector(res.x, names, start), res.cost, res.status


def country_errors(
    dataset: Mapping[int, EstimatedPrevalence],
    locals_: Mapping[int, CountryParams],
    universal: UniversalParams,
    law: str,
    articles: Optional[ArticleSeries],
    config: IntegratorConfig,
) -> dict[int, float]:
    out = {}
    for c in sorted(dataset):
        r = residuals(locals_[c], universal, build_utility(law, locals_[c], universal, articles), dataset[c], config)
        out[c] = float(r @ r)
    return out


def _fit_local_task(args):
    return fit_local(*args)


def alternate_fit(
    dataset: Mapping[int, EstimatedPrevalence],
    law: str = "discounted",
    articles: Optional[ArticleSeries] = None,
    config: FitConfig = FitConfig(),
    start_locals: Optional[Mapping[int, CountryParams]] = None,
    start_universal: Optional[UniversalParams] = None,
) -> FitResult:
    """Alternate local and universal fits until the total error settles.

    Stops on the first outer iteration whose change in total error is below
    ``config.tol`` or after ``config.max_itn`` iterations.
    """
    if law not in LAWS:
        raise ValueError(f"unknown utility law {law!r}")
    if not dataset:
        raise ValueError("no countries to fit")
    order = sorted(dataset)
    for c in order:
        _check_data(dataset[c])

    init = config.initial
    universal = start_universal or UniversalParams(init["b"], init["delta"])
    locals_ = {c: (start_locals or {}).get(c) or initial_locals(dataset[c], law, config) for c in order}
    errors = country_errors(dataset, locals_, universal, law, articles, config.integrator)
    E_prev = sum(errors.values())
    history = [{"iteration": 0, "E": E_prev, "b": universal.b, "delta": universal.delta}]
    statuses: dict[int, str] = {}
    converged_by = "max_itn"
    itn = 0

    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for itn in range(1, config.max_itn + 1):
            tasks = [(dataset[c], universal, locals_[c], law, articles, config) for c in order]
            results = list(pool.map(_fit_local_task, tasks)) if pool else [fit_local(*t) for t in tasks]
            for c, (p, _err, status) in zip(order, results):
                locals_[c] = p
                statuses[c] = status
            universal, E, _status = fit_universal(dataset, locals_, universal, law, articles, config)
            history.append({"iteration": itn, "E": E, "b": universal.b, "delta": universal.delta})
            log.debug("iteration %d: E=%.9g b=%.6f delta=%.6f", itn, E, universal.b, universal.delta)
            if E > E_prev * (1.0 + 1e-12) + 1e-15:
                raise AssertionError(f"total error increased at iteration {itn}: {E_prev} -> {E}")
            if abs(E_prev - E) < config.tol:
                converged_by = "tol"
                E_prev = E
                break
            E_prev = E
    finally:
        if pool:
            pool.shutdown()

    errors = country_errors(dataset, locals_, universal, law, articles, config.integrator)
    total = math.fsum(errors.values())
    return FitResult(law, universal, locals_, errors, total, itn, converged_by, history, statuses)


def with_overrides(config: FitConfig, **kw) -> FitConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
