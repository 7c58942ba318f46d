"""Synthetic measurement files generated from known model parameters."""
from __future__ import annotations

import json
from typing import Mapping, Optional

import numpy as np

from .calibrate import build_utility
from .dataio import CONSUMPTION, PREVALENCE, Observation, bundled_fit_table, bundled_metadata
from .integrator import IntegratorConfig, integrate
from .model import ArticleSeries, CountryParams, UniversalParams

# x_hat = SLOPE * c + INTERCEPT inverts the generated consumption exactly
SLOPE = 0.04
INTERCEPT = 0.0
FIRST_YEAR, LAST_YEAR = 1920, 2009
SURVEY_START = 1965
TRUTH_INTEGRATOR = IntegratorConfig(rtol=1e-10, atol=1e-12)


def published_truth(t0: float = FIRST_YEAR) -> tuple[UniversalParams, dict[int, CountryParams]]:
    """Universal and per-country parameters of the bundled fit table, all started at ``t0``."""
    from .reports import read_fit_table

    universal, rows = read_fit_table(bundled_fit_table())
    ids = {m.abbrev: cid for cid, m in bundled_metadata().items()}
    locals_ = {
        ids[abbrev]: CountryParams(a=r.a, x0=r.x0, u0=r.u0, u_inf=r.u_inf, t0=t0)
        for abbrev, r in rows.items()
    }
    return UniversalParams(universal["b"], universal["delta"]), locals_


def noisy_prevalence(
    params: CountryParams,
    universal: UniversalParams,
    articles: Optional[ArticleSeries],
    years: np.ndarray,
    noise: float,
    rng: np.random.Generator,
    law: str = "discounted",
) -> np.ndarray:
    utility = build_utility(law, params, universal, articles)
    x = integrate(params, universal, utility, years, TRUTH_INTEGRATOR).values
    eps = rng.normal(0.0, noise, len(years)) if noise > 0 else np.zeros(len(years))
    return np.clip(x + eps, 0.0, 1.0)


def generate(
    universal: UniversalParams,
    locals_: Mapping[int, CountryParams],
    articles: Optional[ArticleSeries],
    seed: int,
    noise: float = 0.01,
    first_year: int = FIRST_YEAR,
    last_year: int = LAST_YEAR,
    survey_start: int = SURVEY_START,
    law: str = "discounted",
) -> list[Observation]:
    """Consumption for every year plus survey prevalence from ``survey_start`` on.

    Consumption is the noisy model prevalence mapped through the inverse of a
    fixed linear relation, and the surveys report the same noisy values, so
    regression followed by estimation reproduces the noisy curve.
    """
    rng = np.random.default_rng(seed)
    years = np.arange(first_year, last_year + 1)
    out: list[Observation] = []
    for cid in sorted(locals_):
        x = noisy_prevalence(locals_[cid], universal, articles, years, noise, rng, law)
        consumption = np.maximum((x - INTERCEPT) / SLOPE, 0.0)
        for t, c in zip(years, consumption):
            out.append(Observation(cid, int(t), float(c), CONSUMPTION))
        for t, v in zip(years, x):
            if t >= survey_start:
                out.append(Observation(cid, int(t), float(v), PREVALENCE))
    return out


def truth_manifest(
    universal: UniversalParams,
    locals_: Mapping[int, CountryParams],
    seed: int,
    noise: float,
    law: str,
) -> str:
    doc = {
        "seed": seed,
        "noise": noise,
        "law": law,
        "years": [FIRST_YEAR, LAST_YEAR],
        "survey_start": SURVEY_START,
        "consumption_map": {"C": SLOPE, "B": INTERCEPT},
        "universal": {"b": universal.b, "delta": universal.delta},
        "countries": {
            str(cid): {"a": p.a, "x0": p.x0, "u0": p.u0, "u_inf": p.u_inf, "t0": p.t0, "t_star": p.t_star}
            for cid, p in sorted(locals_.items())
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
