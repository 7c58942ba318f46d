"""Command-line entry point: ``contagion-fit <command> [options]``.

Exit status is 0 on success, 1 when a fit or integration fails numerically
and 2 for unreadable or invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import reports
from .analysis import CountryAnalysis, average_slope, correlation_study, peak_year
from .calibrate import LAWS, FitConfig, FitError, alternate_fit, build_utility, initial_locals
from .dataio import (
    CONSUMPTION,
    PREVALENCE,
    DataError,
    bundled_articles,
    bundled_fit_table,
    bundled_metadata,
    bundled_peak_years,
    country_ids,
    estimate_prevalence,
    format_articles,
    observation_counts,
    parse_articles,
    parse_measurements,
    parse_metadata,
    read_text,
    series,
)
from .integrator import IntegrationError, IntegratorConfig, integrate
from .model import CountryParams, UniversalParams
from .svg import Chart
from .synth import generate, published_truth, truth_manifest

log = logging.getLogger("contagion_fit")

ENV_DATA = "CONTAGION_FIT_DATA"
MEASUREMENTS, ARTICLES, METADATA = "measurements.csv", "articles.csv", "countries.csv"


class InputError(Exception):
    pass


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# --- input resolution -------------------------------------------------------


def _data_path(args, name: str, override: Optional[str]) -> Path:
    if override:
        return Path(override)
    base = args.data_dir or os.environ.get(ENV_DATA)
    if not base:
        raise InputError(f"no data directory given (use --data-dir or ${ENV_DATA})")
    return Path(base) / name


def _load(args, what: str):
    names = {"measurements": MEASUREMENTS, "articles": ARTICLES, "metadata": METADATA}
    path = _data_path(args, names[what], getattr(args, what))
    if not path.is_file():
        raise InputError(f"{what} file not found: {path}")
    text = read_text(path)
    try:
        if what == "measurements":
            return parse_measurements(text)
        if what == "articles":
            return parse_articles(text)
        return parse_metadata(text)
    except (DataError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _metadata(args):
    """Metadata from the data directory when present, else the bundled table."""
    try:
        return _load(args, "metadata")
    except InputError:
        if args.metadata:
            raise
        return bundled_metadata()


def _articles(args):
    try:
        return _load(args, "articles")
    except InputError:
        if args.articles:
            raise
        log.warning("no article file found; using the bundled synthetic publication series")
        return bundled_articles()


def _country_filter(args, meta) -> Optional[set[int]]:
    if not args.countries:
        return None
    by_abbrev = {m.abbrev.upper(): cid for cid, m in meta.items()}
    out = set()
    for token in args.countries.split(","):
        token = token.strip().upper()
        if not token:
            continue
        if token.isdigit():
            out.add(int(token))
        elif token in by_abbrev:
            out.add(by_abbrev[token])
        else:
            raise InputError(f"unknown country {token!r}")
    return out


def _screen_ids(args, meta) -> set[int]:
    by_abbrev = {m.abbrev.upper(): cid for cid, m in meta.items()}
    out = set()
    for token in (args.screen_outliers or "").split(","):
        token = token.strip().upper()
        if token:
            if token not in by_abbrev:
                raise InputError(f"unknown country {token!r} in --screen-outliers")
            out.add(by_abbrev[token])
    return out


def _abbrev(meta, cid) -> str:
    return meta[cid].abbrev if cid in meta else str(cid)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _fit_config(args) -> FitConfig:
    cfg = FitConfig(integrator=IntegratorConfig(rtol=args.rtol, atol=args.atol))
    return replace(cfg, tol=args.tol, max_itn=args.max_itn, workers=args.workers)


def _estimates(args, obs, meta):
    wanted = _country_filter(args, meta)
    screen = _screen_ids(args, meta)
    out = {}
    for cid in country_ids(obs):
        if wanted is not None and cid not in wanted:
            continue
        out[cid] = estimate_prevalence(obs, cid, screen_outliers=cid in screen, alpha=args.alpha)
    if wanted is not None and not out:
        raise InputError("no data for the selected countries")
    return out


# --- commands ---------------------------------------------------------------


def cmd_ingest(args) -> int:
    obs = _load(args, "measurements")
    articles = _load(args, "articles")
    meta = _load(args, "metadata")
    counts = observation_counts(obs)
    print(f"{'No.':>4}  {'Country':<16}{'Abbrev':<7}{'x period':<12}{'x obs':>6}  {'c period':<12}{'c obs':>6}")
    for cid in sorted(set(counts) | set(meta)):
        name = meta[cid].name if cid in meta else "?"
        row = counts.get(cid, {})

        def cell(kind):
            if kind not in row:
                return "--", 0
            n, lo, hi = row[kind]
            return f"{lo}-{hi}", n

        xp, xn = cell(PREVALENCE)
        cp, cn = cell(CONSUMPTION)
        print(f"{cid:>4}  {name:<16}{_abbrev(meta, cid):<7}{xp:<12}{xn:>6}  {cp:<12}{cn:>6}")
    unknown = sorted(set(counts) - set(meta))
    if unknown:
        print(f"warning: no metadata for country ids {unknown}", file=sys.stderr)
    print(
        f"articles: {articles.years[0]}-{articles.years[-1]}, "
        f"{articles.cumulative[-1]} cumulative, {len(obs)} measurements"
    )
    return 0


def cmd_estimate(args) -> int:
    obs = _load(args, "measurements")
    meta = _metadata(args)
    estimates = _estimates(args, obs, meta)
    out = _out_dir(args)
    table = reports.regression_table(estimates, meta)
    _write(out / "regression.csv", table)
    xdir = out / "x_hat"
    xdir.mkdir(exist_ok=True)
    for cid, est in estimates.items():
        if est.regression is not None:
            _write(xdir / f"{_abbrev(meta, cid)}.csv", reports.estimate_csv(est))
    sys.stdout.write(table)
    passed = [_abbrev(meta, c) for c, e in sorted(estimates.items()) if e.passed_gate]
    print(f"passed gate: {', '.join(passed) if passed else 'none'}")
    return 0


def _fit_dataset(args, obs, meta):
    estimates = _estimates(args, obs, meta)
    if args.countries:
        dataset = {c: e for c, e in estimates.items() if e.regression is not None}
        for c, e in dataset.items():
            if not e.passed_gate:
                log.warning("%s does not pass the quality gate but was requested", _abbrev(meta, c))
    else:
        dataset = {c: e for c, e in estimates.items() if e.passed_gate}
    if not dataset:
        raise InputError("no country has a usable prevalence estimate")
    return dataset


def _perturbed_start(dataset, law, config, rng):
    locals_ = {}
    for c, est in dataset.items():
        p = initial_locals(est, law, config)
        jitter = lambda v, s, lo=0.0, hi=1.0: float(np.clip(v + rng.normal(0, s), lo, hi))
        locals_[c] = replace(p, a=jitter(p.a, 0.1, 0.0, 2.0), u0=jitter(p.u0, 0.02), u_inf=jitter(p.u_inf, 0.02))
    init = config.initial
    universal = UniversalParams(float(np.clip(init["b"] + rng.normal(0, 0.2), 0.0, 2.0)), init["delta"])
    return locals_, universal


def cmd_fit(args) -> int:
    obs = _load(args, "measurements")
    meta = _metadata(args)
    articles = _articles(args) if args.utility == "discounted" else None
    dataset = _fit_dataset(args, obs, meta)
    config = _fit_config(args)

    result = alternate_fit(dataset, args.utility, articles, config)
    rng = np.random.default_rng(args.seed)
    for _ in range(max(0, args.starts - 1)):
        start_locals, start_universal = _perturbed_start(dataset, args.utility, config, rng)
        trial = alternate_fit(dataset, args.utility, articles, config, start_locals, start_universal)
        if trial.total_error < result.total_error:
            result = trial

    out = _out_dir(args)
    _write(out / "fit.csv", reports.fit_table(result, meta))
    _write(out / "iterations.csv", reports.iteration_log(result))
    echo = {
        "utility": args.utility, "tol": config.tol, "max_itn": config.max_itn,
        "countries": [_abbrev(meta, c) for c in sorted(dataset)],
        "screen_outliers": args.screen_outliers, "starts": args.starts, "seed": args.seed,
        "rtol": args.rtol, "atol": args.atol,
    }
    _write(out / "manifest.json", reports.manifest(result, echo))
    for cid, est in sorted(dataset.items()):
        p = result.locals[cid]
        utility = build_utility(args.utility, p, result.universal, articles)
        grid = np.arange(est.times[0], est.times[-1] + 1)
        model = integrate(p, result.universal, utility, grid, config.integrator).values
        chart = Chart(f"{_abbrev(meta, cid)}: fitted model", "year", "prevalence")
        chart.scatter(est.times, est.values, "x_hat").line(grid, model, "model")
        _write(out / f"fit_{_abbrev(meta, cid)}.svg", chart.render())

    print(f"law={result.law} E={result.total_error:.6g} b={result.universal.b:.6g} "
          f"delta={result.universal.delta:.6g} iterations={result.outer_iterations} ({result.converged_by})")
    for cid in sorted(result.locals):
        p = result.locals[cid]
        print(f"  {_abbrev(meta, cid)}: a={p.a:.4f} x0={p.x0:.4f} u0={p.u0:.4f} u_inf={p.u_inf:.4f} "
              f"E_i={result.per_country_error[cid]:.5g}")
    for cid in result.utility_violations():
        print(f"  note: {_abbrev(meta, cid)} has u0 < u_inf")
    return 0


def _explicit_params(args) -> Optional[tuple[CountryParams, UniversalParams]]:
    if args.a is None:
        return None
    missing = [n for n in ("x0", "u0") if getattr(args, n) is None]
    if missing:
        raise InputError(f"explicit parameters need --{' --'.join(missing)}")
    u_inf = args.u_inf if args.u_inf is not None else args.u0
    p = CountryParams(a=args.a, x0=args.x0, u0=args.u0, u_inf=u_inf, t0=float(args.from_year), t_star=args.t_star)
    return p, UniversalParams(args.b, args.delta)


def cmd_simulate(args) -> int:
    meta = _metadata(args)
    articles = _articles(args) if args.utility == "discounted" else None
    runs = []
    explicit = _explicit_params(args)
    if explicit is not None:
        runs.append(("custom", None, *explicit))
    else:
        text = read_text(args.params) if args.params else bundled_fit_table()
        universal, rows = reports.read_fit_table(text)
        u = UniversalParams(universal["b"], universal["delta"] if universal["delta"] is not None else 1.0)
        ids = {m.abbrev: cid for cid, m in meta.items()}
        wanted = _country_filter(args, meta)
        for abbrev, r in rows.items():
            cid = ids.get(abbrev)
            if wanted is not None and cid not in wanted:
                continue
            t0 = r.t0 if r.t0 is not None else float(args.from_year)
            p = CountryParams(a=r.a, x0=r.x0, u0=r.u0, u_inf=r.u_inf, t0=t0, t_star=r.t_star)
            runs.append((abbrev, cid, p, u))
        if not runs:
            raise InputError("no parameter rows selected")

    obs = None
    try:
        obs = _load(args, "measurements")
    except InputError:
        pass
    out = _out_dir(args)
    for name, cid, p, u in runs:
        grid = np.arange(p.t0, args.to_year + 1.0)
        utility = build_utility(args.utility, p, u, articles)
        x = integrate(p, u, utility, grid, IntegratorConfig(rtol=args.rtol, atol=args.atol)).values
        _write(out / f"simulate_{name}.csv", reports._csv(
            [[repr(float(t)), repr(float(v))] for t, v in zip(grid, x)], ["year", "x"]))
        chart = Chart(f"{name}: simulated prevalence", "year", "prevalence").line(grid, x, "model")
        if obs is not None and cid is not None:
            est = estimate_prevalence(obs, cid, screen_outliers=cid in _screen_ids(args, meta), alpha=args.alpha)
            if est.regression is not None:
                chart.scatter(est.times, est.values, "x_hat")
        if args.utility == "constant" and p.a == 1.0:
            r = u.b * (2.0 * p.u0 - 1.0)
            e = np.exp(r * (grid - p.t0))
            chart.line(grid, p.x0 * e / (1.0 - p.x0 + p.x0 * e), "logistic", dashed=True)
        _write(out / f"simulate_{name}.svg", chart.render())
        k = int(np.argmax(x))
        print(f"{name}: peak x={x[k]:.4f} in {grid[k]:.0f}")
    return 0


def cmd_analyze(args) -> int:
    meta = bundled_metadata() if args.tables_only else _metadata(args)
    text = read_text(args.params) if args.params else bundled_fit_table()
    _universal, rows = reports.read_fit_table(text)
    ids = {m.abbrev: cid for cid, m in meta.items()}
    wanted = _country_filter(args, meta)

    estimates = {}
    peaks = bundled_peak_years()
    if not args.tables_only:
        obs = _load(args, "measurements")
        screen = _screen_ids(args, meta)
        for cid in country_ids(obs):
            years, c = series(obs, cid, CONSUMPTION)
            if len(years):
                peaks[cid] = peak_year(years, c)
        for abbrev in rows:
            cid = ids.get(abbrev)
            if cid is not None:
                estimates[cid] = estimate_prevalence(obs, cid, screen_outliers=cid in screen, alpha=args.alpha)

    analyses = []
    for abbrev, r in rows.items():
        cid = ids.get(abbrev)
        if cid is None:
            raise InputError(f"no metadata (IDV) for country {abbrev}")
        if wanted is not None and cid not in wanted:
            continue
        if cid not in peaks:
            raise InputError(f"no peak year for country {abbrev}")
        s_x = t0_used = None
        est = estimates.get(cid)
        if est is not None and est.regression is not None:
            slope = average_slope(est, peaks[cid])
            s_x, t0_used = slope.s_x, slope.t0
        analyses.append(CountryAnalysis(cid, abbrev, r.a, meta[cid].idv, peaks[cid], s_x, t0_used))
    if len(analyses) < 3:
        raise InputError(f"correlations need at least 3 countries, got {len(analyses)}")

    full = [(meta[c].idv, peaks[c]) for c in sorted(peaks) if c in meta and (wanted is None or c in wanted)]
    report = correlation_study(analyses, full if len(full) >= 3 else [])

    out = _out_dir(args)
    _write(out / "table_a6.csv", reports.correlation_table(report))
    _write(out / "correlations.csv", reports.correlation_long(report))
    _write(out / "table_a5.csv", reports.peak_table(
        CountryAnalysis(c, meta[c].abbrev, float("nan"), meta[c].idv, peaks[c]) for c in sorted(peaks) if c in meta
    ))
    _write(out / "slopes.csv", reports.slope_table(analyses))
    _plots(out, analyses, full, report)

    for key, r in report.correlations.items():
        print(f"{key:<16} rho={r.rho:+.3f} p={r.p:.3g} n={r.n}")
    for flag in report.flags:
        print(f"flag: {flag}")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def _plots(out: Path, analyses, full, report):
    labels = [c.abbrev for c in analyses]
    idv = [c.idv for c in analyses]
    a = [c.a for c in analyses]
    tmax = [c.t_max for c in analyses]

    def scatter(name, title, xl, yl, xs, ys):
        ch = Chart(title, xl, yl).scatter(xs, ys, labels=labels).fit_line(xs, ys)
        _write(out / name, ch.render())

    r = report.correlations
    scatter("idv_a.svg", f"a vs IDV (rho={r['IDV~a'].rho:.2f})", "IDV", "a", idv, a)
    scatter("a_tmax.svg", f"t_max vs a (rho={r['a~t_max'].rho:.2f})", "a", "t_max", a, tmax)
    if "IDV~s_x" in r:
        sx = [c.s_x for c in analyses]
        scatter("idv_sx.svg", f"s_x vs IDV (rho={r['IDV~s_x'].rho:.2f})", "IDV", "s_x", idv, sx)
        scatter("a_sx.svg", f"s_x vs a (rho={r['a~s_x'].rho:.2f})", "a", "s_x", a, sx)
    if "IDV~t_max(25)" in r:
        ch = Chart(f"t_max vs IDV (rho={r['IDV~t_max(25)'].rho:.3f})", "IDV", "t_max")
        ch.scatter(idv, tmax, "fitted subset")
        fitted = set(zip(idv, tmax))
        others = [p for p in full if p not in fitted]
        if others:
            ch.scatter([p[0] for p in others], [p[1] for p in others], "others", marker="star")
        ch.fit_line([p[0] for p in full], [p[1] for p in full])
        _write(out / "idv_tmax.svg", ch.render())


def cmd_synth(args) -> int:
    articles = _articles(args) if args.utility == "discounted" else None
    if args.truth:
        doc = json.loads(read_text(args.truth))
        universal = UniversalParams(doc["universal"]["b"], doc["universal"].get("delta", 1.0))
        locals_ = {
            int(k): CountryParams(a=v["a"], x0=v["x0"], u0=v["u0"], u_inf=v.get("u_inf", v["u0"]),
                                  t0=v.get("t0", 1920.0), t_star=v.get("t_star"))
            for k, v in doc["countries"].items()
        }
    else:
        universal, locals_ = published_truth()
    obs = generate(universal, locals_, articles, args.seed, args.noise, law=args.utility)
    out = _out_dir(args)
    from .dataio import format_measurements

    _write(out / MEASUREMENTS, format_measurements(obs))
    _write(out / ARTICLES, format_articles(articles if articles is not None else bundled_articles()))
    meta_text = read_text(_data_path(args, METADATA, args.metadata)) if args.metadata else None
    if meta_text is None:
        from .dataio import _bundled

        meta_text = _bundled("countries.csv")
    _write(out / METADATA, meta_text)
    _write(out / "truth.json", truth_manifest(universal, locals_, args.seed, args.noise, args.utility))
    print(f"wrote {len(obs)} measurements for {len(locals_)} countries to {out}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "estimate": cmd_estimate,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--data-dir", help=f"directory with {MEASUREMENTS}, {ARTICLES}, {METADATA}")
    common.add_argument("--measurements", help="measurement CSV (overrides --data-dir)")
    common.add_argument("--articles", help="article-count CSV (overrides --data-dir)")
    common.add_argument("--metadata", help="country metadata CSV (overrides --data-dir)")
    common.add_argument("--out-dir", default="out")
    common.add_argument("--countries", help="comma-separated abbreviations or ids")
    common.add_argument("--screen-outliers", default="FRA", help="countries whose prevalence is Grubbs-screened")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--utility", choices=LAWS, default="discounted")
    common.add_argument("--tol", type=float, default=1e-6)
    common.add_argument("--max-itn", type=int, default=150)
    common.add_argument("--rtol", type=float, default=1e-6)
    common.add_argument("--atol", type=float, default=1e-9)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="contagion-fit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="validate inputs and print observation counts")
    sub.add_parser("estimate", parents=[common], help="regress prevalence on consumption")
    p = sub.add_parser("fit", parents=[common], help="alternating fit of model parameters")
    p.add_argument("--starts", type=int, default=1, help="extra random restarts around the initial guess")
    p = sub.add_parser("simulate", parents=[common], help="forward-simulate prevalence")
    p.add_argument("--params", help="fit table to read parameters from (default: bundled table)")
    for name in ("a", "x0", "u0", "u-inf", "t-star"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--from-year", type=int, default=1920)
    p.add_argument("--to-year", type=int, default=2010)
    p = sub.add_parser("analyze", parents=[common], help="slope, peak-year and correlation study")
    p.add_argument("--params", help="fit table with the a-values (default: bundled table)")
    p.add_argument("--tables-only", action="store_true", help="use bundled tables only, no measurement data")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic data set")
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--truth", help="JSON file with generating parameters")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, raw in values.items():
        if key not in known:
            raise InputError(f"{args.config}: unknown key {key!r}")
        action = known[key]
        if action.type is not None:
            defaults[key] = action.type(raw)
        elif isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except (InputError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitError, IntegrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
