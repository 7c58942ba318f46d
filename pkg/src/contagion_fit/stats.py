"""Least squares, Pearson correlation, Grubbs outlier test and Student-t CDF."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

__all__ = [
    "DegenerateInputError",
    "RegressionResult",
    "CorrelationResult",
    "GrubbsResult",
    "ols",
    "pearson",
    "grubbs",
    "grubbs_critical",
    "grubbs_p_value",
    "student_t_cdf",
    "student_t_ppf",
]


class DegenerateInputError(ValueError):
    """Input has zero variance where a spread is required."""


@dataclass(frozen=True)
class RegressionResult:
    C_hat: float
    B_hat: float
    ci95_C: float
    ci95_B: float
    r2: float
    p: float
    n_obs: int

    def predict(self, c):
        return self.C_hat * np.asarray(c, dtype=float) + self.B_hat


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p: float
    n: int


@dataclass(frozen=True)
class GrubbsResult:
    index: int
    G: float
    p: float


def student_t_cdf(t: float, df: float) -> float:
    """P(T <= t) for Student's t with ``df`` degrees of freedom.

    Uses the regularized incomplete beta function
    I_{df/(df+t^2)}(df/2, 1/2), halved into the appropriate tail.
    """
    if not df > 0:
        raise ValueError("df must be positive")
    if math.isnan(t):
        raise ValueError("t is NaN")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0.0:
        return 0.5
    tail = 0.5 * float(special.betainc(0.5 * df, 0.5, df / (df + t * t)))
    return 1.0 - tail if t > 0 else tail


def student_t_ppf(q: float, df: float) -> float:
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    # invert the same incomplete-beta relation used by student_t_cdf
    tail = min(q, 1.0 - q)
    x = float(special.betaincinv(0.5 * df, 0.5, 2.0 * tail))
    t = math.sqrt(df * (1.0 - x) / x)
    return t if q > 0.5 else -t


def _two_tailed_p(t: float, df: float) -> float:
    return min(1.0, 2.0 * student_t_cdf(-abs(t), df))


def _as_pair(xs: Sequence[float], ys: Sequence[float], minimum: int):
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D sequences of equal length")
    if len(x) < minimum:
        raise ValueError(f"need at least {minimum} points, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    return x, y


def pearson(xs: Sequence[float], ys: Sequence[float]) -> CorrelationResult:
    x, y = _as_pair(xs, ys, 3)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("zero variance in correlation input")
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    rho = max(-1.0, min(1.0, rho))
    n = len(x)
    if abs(rho) == 1.0:
        return CorrelationResult(rho, 0.0, n)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return CorrelationResult(rho, _two_tailed_p(t, n - 2), n)


def ols(xs: Sequence[float], ys: Sequence[float]) -> RegressionResult:
    """Simple linear regression of ys on xs.

    Confidence intervals are 95% half-widths from the t quantile with n-2
    degrees of freedom; ``p`` is the two-tailed p-value of the x-y
    correlation, which equals that of the slope's t statistic.
    """
    x, y = _as_pair(xs, ys, 3)
    n = len(x)
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateInputError("regressor has zero variance")
    dy = y - ym
    slope = float(dx @ dy) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    sse = float(resid @ resid)
    syy = float(dy @ dy)
    r2 = 1.0 if syy == 0.0 else max(0.0, min(1.0, 1.0 - sse / syy))

    s2 = sse / (n - 2)
    se_slope = math.sqrt(s2 / sxx)
    se_intercept = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    q = student_t_ppf(0.975, n - 2)

    if syy == 0.0 or sse == 0.0:
        p = 0.0 if slope != 0.0 else 1.0
    else:
        p = pearson(x, y).p
    return RegressionResult(slope, intercept, q * se_slope, q * se_intercept, r2, p, n)


def grubbs_critical(n: int, alpha: float) -> float:
    """Two-sided Grubbs critical value for a sample of size ``n``."""
    if n < 3:
        raise ValueError("Grubbs test needs n >= 3")
    if alpha <= 0.0:
        return math.inf
    t = student_t_ppf(1.0 - alpha / (2 * n), n - 2)
    return (n - 1) / math.sqrt(n) * math.sqrt(t * t / (n - 2 + t * t))


def grubbs(values: Sequence[float], alpha: float = 0.05) -> Optional[GrubbsResult]:
    """Two-sided single-outlier Grubbs test.

    Returns the index of the most extreme value when it is significant at
    level ``alpha``, otherwise ``None``.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n < 3:
        raise ValueError("Grubbs test needs n >= 3")
    dev = np.abs(v - v.mean())
    s = float(v.std(ddof=1))
    if s == 0.0:
        return None
    idx = int(np.argmax(dev))
    G = float(dev[idx]) / s
    if G <= grubbs_critical(n, alpha):
        return None
    return GrubbsResult(idx, G, grubbs_p_value(G, n))


def grubbs_p_value(G: float, n: int) -> float:
    """Bonferroni-style two-sided p-value of a Grubbs statistic."""
    denom = (n - 1) ** 2 - n * G * G
    if denom <= 0.0:
        return 0.0
    t = math.sqrt(n * (n - 2) * G * G / denom)
    return min(1.0, 2.0 * n * student_t_cdf(-t, n - 2))
