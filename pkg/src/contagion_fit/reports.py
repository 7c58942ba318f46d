"""CSV/JSON writers and readers for regression, fit and correlation tables."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .analysis import REFERENCE, REFERENCE_FIGURE_25, CountryAnalysis, StudyReport
from .calibrate import FitResult
from .dataio import CountryMeta, EstimatedPrevalence

FIT_COLUMNS = ["row", "country", "a", "x0", "u0", "u_inf", "t_star", "t0", "b", "delta", "E"]


def _num(v: Optional[float], digits: int = 6) -> str:
    return "" if v is None else f"{v:.{digits}g}"


def _csv(rows: Iterable[Iterable], header: Iterable[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def regression_table(estimates: Mapping[int, EstimatedPrevalence], meta: Mapping[int, CountryMeta]) -> str:
    """Per-country regression of prevalence on consumption; dashes where it was skipped."""
    rows = []
    for cid in sorted(estimates):
        est = estimates[cid]
        m = meta.get(cid)
        name = m.name if m else str(cid)
        abbrev = m.abbrev if m else ""
        reg = est.regression
        if reg is None:
            rows.append([cid, name, abbrev, "-", "-", "-", "-", "-", "-", est.n_pairs, "fail", "", est.diagnostic])
            continue
        rows.append([
            cid, name, abbrev,
            _num(reg.C_hat), _num(reg.ci95_C), _num(reg.B_hat), _num(reg.ci95_B),
            f"{reg.r2:.4f}", f"{reg.p:.3g}", reg.n_obs,
            "pass" if est.passed_gate else "fail",
            "" if est.removed_year is None else est.removed_year,
            ";".join(str(y) for y in est.out_of_range_years),
        ])
    header = ["country_id", "country", "abbrev", "C_hat", "ci95_C", "B_hat", "ci95_B",
              "R2", "p", "n_obs", "gate", "removed_outlier_year", "x_hat_out_of_range"]
    return _csv(rows, header)


def estimate_csv(est: EstimatedPrevalence) -> str:
    rows = [[int(t), repr(float(c)), repr(float(x))] for t, c, x in zip(est.times, est.consumption, est.values)]
    return _csv(rows, ["year", "c", "x_hat"])


def fit_table(result: FitResult, meta: Mapping[int, CountryMeta]) -> str:
    u = result.universal
    delta = _num(u.delta, 8) if result.law == "discounted" else ""
    rows = [["universal", "", "", "", "", "", "", "", _num(u.b, 8), delta, _num(result.total_error, 8)]]
    for cid in sorted(result.locals):
        p = result.locals[cid]
        name = meta[cid].abbrev if cid in meta else str(cid)
        rows.append([
            "local", name, _num(p.a, 8), _num(p.x0, 8), _num(p.u0, 8), _num(p.u_inf, 8),
            _num(p.t_star, 8), _num(p.t0, 6), "", "", _num(result.per_country_error[cid], 8),
        ])
    return _csv(rows, FIT_COLUMNS)


@dataclass(frozen=True)
class FitRow:
    country: str
    a: float
    x0: float
    u0: float
    u_inf: float
    E: Optional[float]
    t0: Optional[float] = None
    t_star: Optional[float] = None


def read_fit_table(text: str) -> tuple[dict, dict[str, FitRow]]:
    """Parse a fit table into (universal dict, rows keyed by country abbreviation)."""
    universal: dict = {}
    rows: dict[str, FitRow] = {}

    def f(row, key):
        v = (row.get(key) or "").strip()
        return float(v) if v else None

    for row in csv.DictReader(io.StringIO(text)):
        if row["row"] == "universal":
            universal = {"b": f(row, "b"), "delta": f(row, "delta"), "E": f(row, "E")}
        elif row["row"] == "local":
            rows[row["country"]] = FitRow(
                row["country"], f(row, "a"), f(row, "x0"), f(row, "u0"), f(row, "u_inf"),
                f(row, "E"), f(row, "t0"), f(row, "t_star"),
            )
        else:
            raise ValueError(f"unknown row kind {row['row']!r}")
    return universal, rows


def iteration_log(result: FitResult) -> str:
    rows = [[h["iteration"], repr(h["E"]), repr(h["b"]), repr(h["delta"])] for h in result.history]
    return _csv(rows, ["iteration", "E", "b", "delta"])


def manifest(result: FitResult, config: dict) -> str:
    doc = {
        "law": result.law,
        "config": config,
        "outer_iterations": result.outer_iterations,
        "converged_by": result.converged_by,
        "total_error": result.total_error,
        "universal": {"b": result.universal.b, "delta": result.universal.delta},
        "inner_status": {str(k): v for k, v in sorted(result.inner_status.items())},
        "u0_below_u_inf": result.utility_violations(),
        "history": result.history,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _cell(report: StudyReport, key: str) -> str:
    r = report.correlations.get(key)
    return "" if r is None else f"{r.rho:.3f} ({r.p:.3g})"


def correlation_table(report: StudyReport) -> str:
    """Wide layout: rows IDV and a; columns a, s_x, t_max (subset) and t_max (25 countries)."""
    rows = [
        ["IDV", _cell(report, "IDV~a"), _cell(report, "IDV~s_x"), _cell(report, "IDV~t_max(7)"),
         _cell(report, "IDV~t_max(25)")],
        ["a", "", _cell(report, "a~s_x"), _cell(report, "a~t_max"), ""],
    ]
    return _csv(rows, ["variable", "a", "s_x", "t_max", "t_max_25"])


def correlation_long(report: StudyReport) -> str:
    rows = []
    for key in REFERENCE:
        r = report.correlations.get(key)
        if r is None:
            continue
        ref_rho, ref_p = REFERENCE[key]
        rows.append([key, r.n, repr(r.rho), repr(r.p), ref_rho, ref_p, "yes" if r.p < 0.05 else "no"])
    fr, fp = REFERENCE_FIGURE_25
    if "IDV~t_max(25)" in report.correlations:
        r = report.correlations["IDV~t_max(25)"]
        rows.append(["IDV~t_max(25) [figure]", r.n, repr(r.rho), repr(r.p), fr, fp, "yes" if r.p < 0.05 else "no"])
    return _csv(rows, ["pair", "n", "rho", "p", "published_rho", "published_p", "significant"])


def peak_table(analyses: Iterable[CountryAnalysis]) -> str:
    rows = [[c.abbrev, c.idv, c.t_max] for c in analyses]
    return _csv(rows, ["country", "IDV", "t_max"])


def slope_table(analyses: Iterable[CountryAnalysis]) -> str:
    rows = [[c.abbrev, c.idv, c.a, c.t_max, _num(c.s_x, 8), c.t0_used or ""] for c in analyses]
    return _csv(rows, ["country", "IDV", "a", "t_max", "s_x", "t0"])
