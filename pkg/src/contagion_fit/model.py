"""Binary-choice contagion model of smoking prevalence and its utility laws."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Sequence, Union

__all__ = [
    "ArticleSeries",
    "CountryParams",
    "UniversalParams",
    "Discounted",
    "Constant",
    "Step",
    "UtilityModel",
    "rhs",
    "utility_at",
    "cumulative_articles",
    "discount_factor",
]


@dataclass(frozen=True)
class CountryParams:
    """Local parameters for one country.

    ``a`` is the relative-conformity exponent, ``x0`` the prevalence at
    ``t0``, ``u0``/``u_inf`` the individual utility of smoking with zero and
    perfect knowledge of its health effects. ``t_star`` is only used by the
    step utility law.
    """

    a: float
    x0: float
    u0: float
    u_inf: float
    t0: float
    t_star: float | None = None

    def __post_init__(self):
        for name in ("a", "x0", "u0", "u_inf", "t0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 <= self.a <= 2.0:
            raise ValueError(f"a={self.a} outside [0, 2]")
        for name in ("x0", "u0", "u_inf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class UniversalParams:
    b: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.b) and math.isfinite(self.delta)):
            raise ValueError("universal parameters must be finite")
        if not 0.0 <= self.b <= 2.0:
            raise ValueError(f"b={self.b} outside [0, 2]")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta={self.delta} outside [0, 1]")


@dataclass(frozen=True)
class ArticleSeries:
    """Annual and cumulative counts of health-effects publications."""

    years: tuple[int, ...]
    annual_counts: tuple[int, ...]
    cumulative: tuple[int, ...]

    def __post_init__(self):
        n = len(self.years)
        if n == 0:
            raise ValueError("article series is empty")
        if len(self.annual_counts) != n or len(self.cumulative) != n:
            raise ValueError("article series columns differ in length")
        for k in range(n):
            if self.annual_counts[k] < 0 or self.cumulative[k] < 0:
                raise ValueError(f"negative article count at {self.years[k]}")
            if k and self.years[k] <= self.years[k - 1]:
                raise ValueError(f"years not strictly increasing at {self.years[k]}")
            if k and self.cumulative[k] != self.cumulative[k - 1] + self.annual_counts[k]:
                raise ValueError(f"cumulative count inconsistent at year {self.years[k]}")

    @classmethod
    def from_annual(cls, years: Sequence[int], annual: Sequence[int], start: int = 0) -> "ArticleSeries":
        annual = tuple(int(c) for c in annual)
        cum = tuple(accumulate(annual, initial=int(start)))[1:]
        return cls(tuple(int(y) for y in years), annual, cum)


def cumulative_articles(series: ArticleSeries, t: float) -> float:
    """Linearly interpolated cumulative article count n(t).

    Zero before the first record and constant after the last one.
    """
    if not len(series.years):
        raise ValueError("article series is empty")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    years = series.years
    if t < years[0]:
        return 0.0
    if t >= years[-1]:
        return float(series.cumulative[-1])
    k = bisect.bisect_right(years, t) - 1
    y0, y1 = years[k], years[k + 1]
    c0, c1 = series.cumulative[k], series.cumulative[k + 1]
    return c0 + (c1 - c0) * (t - y0) / (y1 - y0)


def discount_factor(delta: float, n: float) -> float:
    """delta**n evaluated in log space; 0**0 is taken as 1."""
    if n == 0.0 or delta == 1.0:
        return 1.0
    if delta == 0.0:
        return 0.0
    return math.exp(n * math.log(delta))


@dataclass(frozen=True)
class Discounted:
    u0: float
    u_inf: float
    delta: float
    articles: ArticleSeries = field(repr=False)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        # n(t) is piecewise linear, so u(t) has a kink at every record
        if self.delta == 1.0 or self.u0 == self.u_inf:
            return ()
        return tuple(float(y) for y in self.articles.years)


@dataclass(frozen=True)
class Constant:
    u: float

    breakpoints = ()


@dataclass(frozen=True)
class Step:
    u0: float
    u_inf: float
    t_star: float

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.t_star,)


UtilityModel = Union[Discounted, Constant, Step]


def utility_at(model: UtilityModel, t: float) -> float:
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if isinstance(model, Discounted):
        n = cumulative_articles(model.articles, t)
        return model.u_inf + discount_factor(model.delta, n) * (model.u0 - model.u_inf)
    if isinstance(model, Constant):
        return model.u
    if isinstance(model, Step):
        return model.u0 if t < model.t_star else model.u_inf
    raise TypeError(f"unknown utility model {type(model).__name__}")


def rhs(x: float, u_x: float, a: float, b: float) -> float:
    """Rate of change of prevalence.

    ``x`` is clamped to [0, 1] so that adaptive steps probing just outside
    the unit interval stay well defined.
    """
    if not (math.isfinite(x) and math.isfinite(u_x) and math.isfinite(a) and math.isfinite(b)):
        raise ValueError("rhs arguments must be finite")
    if x <= 0.0:
        x = 0.0
    elif x >= 1.0:
        x = 1.0
    y = 1.0 - x
    return b * (y * x**a * u_x - x * y**a * (1.0 - u_x))
