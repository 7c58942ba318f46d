"""Reading the measurement, article and country files; prevalence estimation."""
from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, TextIO

import numpy as np

from .model import ArticleSeries
from .stats import RegressionResult, grubbs, ols

log = logging.getLogger(__name__)

PREVALENCE = 0
CONSUMPTION = 1

R2_MIN = 0.7
P_MAX = 1e-3
N_OBS_MIN = 15


class DataError(ValueError):
    """Malformed or invalid input file."""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.source = source


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


@dataclass(frozen=True)
class Observation:
    country_id: int
    year: int
    value: float
    kind: int


@dataclass(frozen=True)
class CountryMeta:
    country_id: int
    name: str
    abbrev: str
    idv: int


@dataclass(frozen=True)
class EstimatedPrevalence:
    """Prevalence reconstructed from consumption, x_hat = C_hat * c + B_hat."""

    country_id: int
    times: np.ndarray
    values: np.ndarray
    regression: Optional[RegressionResult]
    passed_gate: bool
    removed_year: Optional[int] = None
    diagnostic: str = ""
    consumption: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_pairs: int = 0

    @property
    def out_of_range_years(self) -> list[int]:
        mask = (self.values < 0.0) | (self.values > 1.0)
        return [int(t) for t in self.times[mask]]


def _rows(stream: TextIO | str):
    text = stream if isinstance(stream, str) else stream.read()
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line:
            continue
        yield lineno, [cell.strip() for cell in line.split(",")]


def _int_cell(cell: str, what: str, lineno: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"{what} {cell!r} is not a number", lineno) from None
    if not value.is_integer():
        raise ParseError(f"{what} {cell!r} is not an integer", lineno)
    return int(value)


def parse_measurements(stream: TextIO | str) -> list[Observation]:
    """Parse ``country_id,year,value,kind`` rows (no header)."""
    out = []
    for lineno, cells in _rows(stream):
        if len(cells) != 4:
            raise ParseError(f"expected 4 columns, found {len(cells)}", lineno)
        cid = _int_cell(cells[0], "country id", lineno)
        year = _int_cell(cells[1], "year", lineno)
        try:
            value = float(cells[2])
        except ValueError:
            raise ParseError(f"measurement {cells[2]!r} is not a number", lineno) from None
        kind = _int_cell(cells[3], "kind", lineno)
        if kind not in (PREVALENCE, CONSUMPTION):
            raise ValidationError(f"kind must be 0 or 1, got {kind}", lineno)
        if not np.isfinite(value):
            raise ValidationError("measurement is not finite", lineno)
        if kind == PREVALENCE and not 0.0 <= value <= 1.0:
            raise ValidationError(f"prevalence {value} outside [0, 1]", lineno)
        if kind == CONSUMPTION and value < 0.0:
            raise ValidationError(f"negative consumption {value}", lineno)
        out.append(Observation(cid, year, value, kind))
    return out


def format_measurements(obs: Iterable[Observation]) -> str:
    return "".join(f"{o.country_id},{o.year},{o.value!r},{o.kind}\n" for o in obs)


def parse_articles(stream: TextIO | str) -> ArticleSeries:
    """Parse ``year,annual,cumulative`` rows and check the running total."""
    years, annual, cumulative = [], [], []
    for lineno, cells in _rows(stream):
        if len(cells) != 3:
            raise ParseError(f"expected 3 columns, found {len(cells)}", lineno)
        year = _int_cell(cells[0], "year", lineno)
        count = _int_cell(cells[1], "annual count", lineno)
        total = _int_cell(cells[2], "cumulative count", lineno)
        if count < 0 or total < 0:
            raise ValidationError(f"negative article count in {year}", lineno)
        if years and year <= years[-1]:
            raise ValidationError(f"year {year} does not follow {years[-1]}", lineno)
        if cumulative and total != cumulative[-1] + count:
            raise ValidationError(
                f"cumulative count at year {year} is {total}, expected {cumulative[-1] + count}", lineno
            )
        years.append(year)
        annual.append(count)
        cumulative.append(total)
    if not years:
        raise ValueError("article file is empty")
    return ArticleSeries(tuple(years), tuple(annual), tuple(cumulative))


def format_articles(series: ArticleSeries) -> str:
    return "".join(
        f"{y},{n},{c}\n" for y, n, c in zip(series.years, series.annual_counts, series.cumulative)
    )


def parse_metadata(stream: TextIO | str) -> dict[int, CountryMeta]:
    """Parse the ``country_id,name,abbrev,idv`` metadata file (with header)."""
    text = stream if isinstance(stream, str) else stream.read()
    reader = csv.DictReader(io.StringIO(text))
    expected = {"country_id", "name", "abbrev", "idv"}
    if reader.fieldnames is None or not expected <= {f.strip() for f in reader.fieldnames}:
        raise ParseError(f"metadata header must contain {sorted(expected)}", 1)
    out = {}
    for lineno, row in enumerate(reader, start=2):
        row = {k.strip(): (v or "").strip() for k, v in row.items() if k}
        cid = _int_cell(row["country_id"], "country id", lineno)
        idv = _int_cell(row["idv"], "idv", lineno)
        if not 0 <= idv <= 100:
            raise ValidationError(f"idv {idv} outside [0, 100]", lineno)
        abbrev = row["abbrev"]
        if len(abbrev) != 3:
            raise ValidationError(f"abbreviation {abbrev!r} is not 3 letters", lineno)
        out[cid] = CountryMeta(cid, row["name"], abbrev, idv)
    return out


def _bundled(name: str) -> str:
    return resources.files("contagion_fit").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def bundled_metadata() -> dict[int, CountryMeta]:
    """Country list with individualism index, transcribed from the published tables."""
    return parse_metadata(_bundled("countries.csv"))


def bundled_peak_years() -> dict[int, int]:
    reader = csv.DictReader(io.StringIO(_bundled("peak_years.csv")))
    return {int(r["country_id"]): int(r["t_max"]) for r in reader}


def bundled_fit_table() -> str:
    return _bundled("fitted_params.csv")


def bundled_articles() -> ArticleSeries:
    """Synthetic stand-in for the publication-count file."""
    return parse_articles(_bundled("articles_synthetic.csv"))


def read_text(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def series(obs: Iterable[Observation], country_id: int, kind: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-year values of one kind for a country; duplicate years are averaged."""
    by_year = defaultdict(list)
    for o in obs:
        if o.country_id == country_id and o.kind == kind:
            by_year[o.year].append(o.value)
    years = sorted(by_year)
    values = []
    for y in years:
        vals = by_year[y]
        if len(vals) > 1:
            log.warning("country %d: %d values of kind %d in %d averaged", country_id, len(vals), kind, y)
        values.append(sum(vals) / len(vals))
    return np.array(years, dtype=int), np.array(values, dtype=float)


def pair_by_year(obs: Iterable[Observation], country_id: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Years with both measurements, and the (consumption, prevalence) pairs.

    Returns ``(years, xs, ys)`` with consumption as ``xs``.
    """
    obs = list(obs)
    cy, cv = series(obs, country_id, CONSUMPTION)
    py, pv = series(obs, country_id, PREVALENCE)
    common, ci, pi = np.intersect1d(cy, py, return_indices=True)
    return common, cv[ci], pv[pi]


def passes_gate(reg: RegressionResult) -> bool:
    return reg.r2 >= R2_MIN and reg.p < P_MAX and reg.n_obs >= N_OBS_MIN


def estimate_prevalence(
    obs: Iterable[Observation],
    country_id: int,
    screen_outliers: bool = False,
    alpha: float = 0.05,
) -> EstimatedPrevalence:
    """Regress prevalence on consumption and extend it over the consumption record.

    With ``screen_outliers`` the ratios x / x_hat are Grubbs-tested once and
    at most one prevalence point is dropped before refitting.
    """
    obs = list(obs)
    c_years, c_values = series(obs, country_id, CONSUMPTION)
    years, xs, ys = pair_by_year(obs, country_id)

    def skipped(msg):
        return EstimatedPrevalence(
            country_id, c_years, np.full(len(c_years), np.nan), None, False,
            diagnostic=msg, consumption=c_values, n_pairs=len(years),
        )

    if len(years) < 3:
        return skipped(f"only {len(years)} paired years")
    try:
        reg = ols(xs, ys)
    except ValueError as exc:
        return skipped(str(exc))

    removed = None
    if screen_outliers:
        fitted = reg.predict(xs)
        if np.all(fitted != 0.0):
            hit = grubbs(ys / fitted, alpha)
            if hit is not None:
                removed = int(years[hit.index])
                keep = np.arange(len(years)) != hit.index
                log.info("country %d: prevalence in %d flagged (G=%.3f, p=%.3g)", country_id, removed, hit.G, hit.p)
                reg = ols(xs[keep], ys[keep])

    values = reg.predict(c_values)
    est = EstimatedPrevalence(
        country_id, c_years, values, reg, passes_gate(reg),
        removed_year=removed, consumption=c_values, n_pairs=len(years),
    )
    if est.out_of_range_years:
        log.warning("country %d: x_hat outside [0, 1] in %s", country_id, est.out_of_range_years)
    return est


def country_ids(obs: Iterable[Observation]) -> list[int]:
    return sorted({o.country_id for o in obs})


def observation_counts(obs: Iterable[Observation]) -> dict[int, dict[int, tuple[int, int, int]]]:
    """Per country and kind: (number of observations, first year, last year)."""
    acc: dict[int, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    for o in obs:
        acc[o.country_id][o.kind].append(o.year)
    return {
        cid: {kind: (len(ys), min(ys), max(ys)) for kind, ys in kinds.items()}
        for cid, kinds in acc.items()
    }
