"""Box-constrained Levenberg-Marquardt for small nonlinear least-squares problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["LMResult", "forward_jacobian", "least_squares_box"]


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    cost: float
    nfev: int
    status: str

    @property
    def ok(self) -> bool:
        return self.status in ("ftol", "xtol", "gtol")


def forward_jacobian(
    fun: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    r0: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    rel_step: float,
) -> np.ndarray:
    """One-sided difference Jacobian; steps backward where the box forbids forward."""
    J = np.empty((len(r0), len(x)))
    for j in range(len(x)):
        h = rel_step * max(abs(x[j]), 1.0)
        if x[j] + h > hi[j]:
            h = -h
        xp = x.copy()
        xp[j] += h
        J[:, j] = (fun(xp) - r0) / (xp[j] - x[j])
    return J


def least_squares_box(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    lo,
    hi,
    *,
    max_nfev: int = 200,
    rel_step: float = 1e-6,
    ftol: float = 1e-10,
    xtol: float = 1e-10,
    gtol: float = 1e-14,
    damping: float = 1e-3,
) -> LMResult:
    """Minimize ||fun(x)||^2 subject to lo <= x <= hi.

    Steps are projected onto the box, and coordinates pinned at a bound whose
    gradient points outward are dropped from the linear system. A trial point
    where ``fun`` raises ``ArithmeticError`` or ``RuntimeError`` counts as a
    rejected step.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    r = np.asarray(fun(x), dtype=float)
    cost = float(r @ r)
    nfev = 1
    lam = damping
    status = "max_nfev"

    while nfev < max_nfev:
        J = forward_jacobian(fun, x, r, lo, hi, rel_step)
        nfev += len(x)
        g = J.T @ r
        blocked = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~blocked
        if not free.any() or np.max(np.abs(g[free])) <= gtol:
            status = "gtol"
            break
        Jf = J[:, free]
        JtJ = Jf.T @ Jf
        diag = np.maximum(np.diag(JtJ), 1e-12)
        accepted = False
        while nfev < max_nfev:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), -g[free])
            except np.linalg.LinAlgError:
                lam *= 4.0
                continue
            x_try = x.copy()
            x_try[free] += step
            x_try = np.clip(x_try, lo, hi)
            dx = np.linalg.norm(x_try - x)
            if dx <= xtol * (xtol + np.linalg.norm(x)):
                status = "xtol"
                break
            try:
                r_try = np.asarray(fun(x_try), dtype=float)
                nfev += 1
                cost_try = float(r_try @ r_try)
            except (ArithmeticError, RuntimeError):
                nfev += 1
                cost_try = np.inf
            if cost_try < cost:
                reduction = cost - cost_try
                x, r, cost = x_try, r_try, cost_try
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if reduction <= ftol * cost:
                    status = "ftol"
                break
            lam *= 4.0
            if lam > 1e14:
                status = "stalled"
                break
        if not accepted or status != "max_nfev":
            break
    return LMResult(x, r, cost, nfev, status)
