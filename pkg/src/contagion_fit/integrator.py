"""Adaptive Dormand-Prince 5(4) integration of the scalar prevalence equation."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import (
    Constant,
    CountryParams,
    Discounted,
    Step,
    UniversalParams,
    UtilityModel,
    cumulative_articles,
    utility_at,
)

__all__ = ["IntegratorConfig", "IntegrationError", "Trajectory", "integrate", "solve_scalar"]

# Dormand-Prince tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# fifth-order minus embedded fourth-order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# Shampine's quartic continuous extension; row i gives stage i's polynomial in theta
_P = tuple(
    tuple(float(c) for c in row)
    for row in [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)
_SAFETY = 0.9
_MIN_SCALE, _MAX_SCALE = 0.2, 5.0


class IntegrationError(RuntimeError):
    """Step size collapsed below the resolvable scale."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.10g}")
        self.time = time


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-6
    atol: float = 1e-9
    h_init: float = 0.1
    h_max: float = 5.0

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not 0 < self.h_init <= self.h_max:
            raise ValueError("need 0 < h_init <= h_max")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.times)


def _dense(theta: float, y: float, h: float, k: Sequence[float]) -> float:
    t2 = theta * theta
    powers = (theta, t2, t2 * theta, t2 * t2)
    acc = 0.0
    for i, ki in enumerate(k):
        if ki:
            row = _P[i]
            acc += ki * (row[0] * powers[0] + row[1] * powers[1] + row[2] * powers[2] + row[3] * powers[3])
    return y + h * acc


def solve_scalar(
    f: Callable[[float, float], float],
    t0: float,
    y0: float,
    eval_times: Sequence[float],
    config: IntegratorConfig = IntegratorConfig(),
    breakpoints: Sequence[float] = (),
) -> np.ndarray:
    """Integrate dy/dt = f(t, y) and return y at each of ``eval_times``.

    The step is restarted at every breakpoint so that discontinuities in
    ``f`` never fall inside a step.
    """
    times = [float(t) for t in eval_times]
    if not times:
        raise ValueError("eval_times is empty")
    for k in range(1, len(times)):
        if times[k] <= times[k - 1]:
            raise ValueError("eval_times must be strictly increasing")
    if times[0] < t0:
        raise ValueError("eval_times start before t0")

    t_end = times[-1]
    stops = sorted(b for b in breakpoints if t0 < b < t_end) + [t_end]
    out = np.empty(len(times))
    idx = 0
    while idx < len(times) and times[idx] == t0:
        out[idx] = y0
        idx += 1

    rtol, atol, h_max = config.rtol, config.atol, config.h_max
    t, y = float(t0), float(y0)
    h = min(config.h_init, h_max)
    eps = sys.float_info.epsilon
    for stop in stops:
        k1 = f(t, y)
        while t < stop:
            h_min = 16.0 * eps * max(abs(t), 1.0)
            if h < h_min:
                raise IntegrationError("step size underflow", t)
            last = t + h >= stop
            step = stop - t if last else h

            k2 = f(t + _C2 * step, y + step * _A21 * k1)
            k3 = f(t + _C3 * step, y + step * (_A31 * k1 + _A32 * k2))
            k4 = f(t + _C4 * step, y + step * (_A41 * k1 + _A42 * k2 + _A43 * k3))
            k5 = f(t + _C5 * step, y + step * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
            k6 = f(t + step, y + step * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
            y_new = y + step * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            k7 = f(t + step, y_new)
            err = step * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
            scale = atol + rtol * max(abs(y), abs(y_new))
            ratio = abs(err) / scale

            if ratio <= 1.0:
                t_new = stop if last else t + step
                ks = (k1, k2, k3, k4, k5, k6, k7)
                while idx < len(times) and times[idx] <= t_new:
                    te = times[idx]
                    if te == t_new:
                        out[idx] = y_new
                    else:
                        out[idx] = _dense((te - t) / step, y, step, ks)
                    idx += 1
                t, y, k1 = t_new, y_new, k7
                grow = _MAX_SCALE if ratio == 0.0 else min(_MAX_SCALE, _SAFETY * ratio**-0.2)
                # keep the step size the controller wanted, not the truncated one
                if not last or step == h:
                    h = min(h_max, step * max(_MIN_SCALE, grow))
            else:
                h = step * max(_MIN_SCALE, _SAFETY * ratio**-0.2)
            if not math.isfinite(y):
                raise IntegrationError("non-finite state", t)
    return out


def _utility_function(utility: UtilityModel) -> Callable[[float], float]:
    if isinstance(utility, Discounted):
        u0, u_inf, delta, series = utility.u0, utility.u_inf, utility.delta, utility.articles
        if delta == 1.0 or u0 == u_inf:
            return lambda t: u0
        if delta == 0.0:
            return lambda t: u_inf if cumulative_articles(series, t) > 0 else u0
        log_delta = math.log(delta)
        years = np.asarray(series.years, dtype=float)
        cum = np.asarray(series.cumulative, dtype=float)
        first, last, n_last = years[0], years[-1], cum[-1]
        span = u0 - u_inf
        ys, cs = years.tolist(), cum.tolist()

        def u(t: float) -> float:
            if t < first:
                return u0
            if t >= last:
                n = n_last
            else:
                k = min(max(int(t - first), 0), len(ys) - 2)
                # annual records make the integer offset a good first guess
                while k + 1 < len(ys) and ys[k + 1] <= t:
                    k += 1
                while ys[k] > t:
                    k -= 1
                n = cs[k] + (cs[k + 1] - cs[k]) * (t - ys[k]) / (ys[k + 1] - ys[k])
            return u_inf + math.exp(n * log_delta) * span

        return u
    if isinstance(utility, Constant):
        value = utility.u
        return lambda t: value
    if isinstance(utility, Step):
        return lambda t: utility_at(utility, t)
    raise TypeError(f"unknown utility model {type(utility).__name__}")


def integrate(
    params: CountryParams,
    universal: UniversalParams,
    utility: UtilityModel,
    eval_times: Sequence[float],
    config: IntegratorConfig = IntegratorConfig(),
) -> Trajectory:
    """Prevalence trajectory x(t) from x(t0) = x0 sampled at ``eval_times``.

    The timescale ``b`` comes from ``universal``; the discount factor is the
    one carried by ``utility``.
    """
    a, b = params.a, universal.b
    u_of_t = _utility_function(utility)

    def field(t: float, x: float) -> float:
        if x <= 0.0:
            x = 0.0
        elif x >= 1.0:
            x = 1.0
        ux = u_of_t(t)
        y = 1.0 - x
        return b * (y * x**a * ux - x * y**a * (1.0 - ux))

    times = np.asarray(eval_times, dtype=float)
    values = solve_scalar(field, params.t0, params.x0, times, config, utility.breakpoints)
    # the exact solution never leaves [0, 1]; drop overshoot at tolerance level
    return Trajectory(times, np.clip(values, 0.0, 1.0))
