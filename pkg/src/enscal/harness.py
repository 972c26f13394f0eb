"""Rolling-window calibration experiments, training-length sweeps and method comparisons.

For every evaluation date one model per method is fitted on the pooled cases of
the preceding training window and applied to every station's case on that
date.  Fit failures skip the date's cases; more than 5% skipped cases abort.
"""
from __future__ import annotations

import datetime as dt
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bma import (
    BIAS_MODES,
    fit_bma_gamma,
    fit_bma_normal_crps,
    fit_bma_normal_em,
    fit_bma_truncnormal_ml,
    predict_bma,
)
from .data import Dataset, earliest_start, make_window, parse_grouping, window_plan
from .emos import fit_emos, predict_emos
from .errors import ComparabilityError, ConfigError, EnscalError, ExperimentError
from .verification import (
    NOMINAL_LEVEL,
    ScoreReport,
    central_interval,
    crps_ensemble,
    ks_uniform_test,
    pit_histogram,
    pit_value,
    rank_histogram,
    summarize,
    verification_rank,
)

log = logging.getLogger(__name__)

METHODS = ("raw", "bma_normal", "bma_gamma", "bma_truncnormal", "emos_normal", "emos_truncnormal")
NONNEGATIVE_ONLY = {"bma_gamma", "bma_truncnormal", "emos_truncnormal"}
MAX_SKIP_FRACTION = 0.05


@dataclass(frozen=True)
class ExperimentSpec:
    method: str
    training_length: int = 35
    sweep: tuple | None = None
    start: dt.date | None = None
    end: dt.date | None = None
    grouping: str = "two_group"
    bias: str = "linear"
    estimator: str = "ml"
    level: float = NOMINAL_LEVEL
    seed: int = 0
    skip_days: int = 0
    variable_kind: str | None = None
    label: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.bias not in BIAS_MODES:
            raise ConfigError(f"unknown bias mode {self.bias!r}")
        if self.estimator not in ("ml", "crps"):
            raise ConfigError("estimator must be 'ml' or 'crps'")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.training_length < 1:
            raise ConfigError("training length must be >= 1")
        if self.sweep is not None:
            lo, hi = self.sweep
            if lo < 1 or hi < lo:
                raise ConfigError(f"invalid sweep range [{lo}, {hi}]")
        if self.variable_kind == "real_line" and self.method in NONNEGATIVE_ONLY:
            raise ConfigError(f"{self.method} needs a nonnegative variable")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.method == "bma_normal":
            suffix = f"_{self.bias}" + ("_crps" if self.estimator == "crps" else "")
            return self.method + suffix
        return self.method


@dataclass(frozen=True)
class CaseResult:
    date: dt.date
    station: str
    obs: float
    crps: float
    pit: float
    lower: float
    upper: float
    median: float
    mean: float
    rank: int
    n_members: int

    @property
    def key(self):
        return (self.date, self.station)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    report: ScoreReport
    cases: list
    ks_stat: float
    ks_p: float
    models: list = field(default_factory=list, repr=False)
    skipped: list = field(default_factory=list)
    training_length: int | None = None

    @property
    def evaluation_dates(self) -> list:
        return sorted({c.date for c in self.cases})

    def pit_histogram(self, bins: int = 11):
        return pit_histogram([c.pit for c in self.cases], bins)

    def rank_histogram(self):
        return rank_histogram([c.rank for c in self.cases], self.cases[0].n_members)


def _fit(spec: ExperimentSpec, window, grouping):
    m = spec.method
    if m == "bma_normal":
        if spec.estimator == "crps":
            return fit_bma_normal_crps(window, grouping, spec.bias)
        return fit_bma_normal_em(window, grouping, spec.bias)
    if m == "bma_gamma":
        return fit_bma_gamma(window, grouping)
    if m == "bma_truncnormal":
        return fit_bma_truncnormal_ml(window, grouping)
    if m == "emos_normal":
        return fit_emos(window, grouping, "normal")
    if m == "emos_truncnormal":
        return fit_emos(window, grouping, "truncnormal")
    raise ConfigError(f"method {m!r} has nothing to fit")


def _predict(model, members):
    if model.kind.startswith("emos"):
        return predict_emos(model, members)
    return predict_bma(model, members)


def _default_start(ds: Dataset, spec: ExperimentSpec, length: int) -> dt.date:
    if spec.start is not None:
        return spec.start
    if spec.method == "raw":
        return ds.unique_dates[0]
    first = earliest_start(ds, length, spec.skip_days)
    if first is None:
        raise ExperimentError(f"no date has {length} prior data dates")
    return first


def _check_kind(ds: Dataset, spec: ExperimentSpec):
    if spec.method in NONNEGATIVE_ONLY and ds.variable_kind != "nonnegative":
        raise ConfigError(f"{spec.method} needs a dataset with variable_kind 'nonnegative'")


def _target_dates(ds, spec, length, start):
    if spec.method == "raw":
        return [(d, ()) for d in ds.unique_dates if d >= start and (spec.end is None or d <= spec.end)]
    return window_plan(ds, length, start, spec.end, spec.skip_days)


def run_experiment(ds: Dataset, spec: ExperimentSpec, training_length: int | None = None,
                   keep_models: bool = True) -> ExperimentResult:
    """Rolling calibration of ``spec.method`` over ``ds``; see module docstring."""
    _check_kind(ds, spec)
    length = training_length or spec.training_length
    grouping = parse_grouping(spec.grouping, ds.n_members)
    start = _default_start(ds, spec, length)
    plan = _target_dates(ds, spec, length, start)
    rng = np.random.default_rng(spec.seed)
    cases, models, skipped = [], [], []
    total = 0
    for target, train_dates in plan:
        idx = [i for i in ds.date_index(target) if not math.isnan(ds.obs[i])]
        total += len(idx)
        if not idx:
            continue
        model = None
        if spec.method != "raw":
            assert train_dates and max(train_dates) < target, "training window reaches the target date"
            window = make_window(ds, target, train_dates)
            try:
                model = _fit(spec, window, grouping)
            except (EnscalError, ValueError, ArithmeticError) as exc:
                log.warning("%s: fit for %s failed (%s); skipping %d cases",
                            spec.name, target, exc, len(idx))
                skipped.extend((target, ds.station_ids[i]) for i in idx)
                continue
            if keep_models:
                models.append((target, train_dates, model))
        for i in idx:
            f = grouping.canonical(ds.members[i])
            y = float(ds.obs[i])
            rank = verification_rank(f, y, rng)
            M = f.size
            try:
                if model is None:
                    crps = crps_ensemble(f, y)
                    # uniformised rank stands in for the PIT of a discrete ensemble
                    pit = (rank - 1 + float(rng.random())) / (M + 1)
                    lo, hi = float(f.min()), float(f.max())
                    med, mean = float(np.median(f)), float(np.mean(f))
                else:
                    dist = _predict(model, f)
                    crps = float(dist.crps(y))
                    pit = pit_value(dist, y, rng)
                    lo, hi = central_interval(dist, spec.level)
                    med, mean = float(dist.median()), float(dist.mean())
            except (EnscalError, ValueError, ArithmeticError) as exc:
                log.warning("%s: scoring %s/%s failed (%s)", spec.name, target, ds.station_ids[i], exc)
                skipped.append((target, ds.station_ids[i]))
                continue
            cases.append(CaseResult(target, ds.station_ids[i], y, crps, pit, lo, hi, med, mean, rank, M))
    if total == 0:
        raise ExperimentError("no evaluation cases with observations")
    if len(skipped) > MAX_SKIP_FRACTION * total:
        raise ExperimentError(
            f"{spec.name}: {len(skipped)} of {total} evaluation cases skipped (> {MAX_SKIP_FRACTION:.0%})"
        )
    if not cases:
        raise ExperimentError("every evaluation case was skipped")
    return _result(spec, cases, models, skipped, length)


def _result(spec, cases, models, skipped, length) -> ExperimentResult:
    arr = {k: np.array([getattr(c, k) for c in cases], dtype=float)
           for k in ("crps", "median", "mean", "obs", "lower", "upper", "pit")}
    report = summarize(arr["crps"], arr["median"], arr["mean"], arr["obs"], arr["lower"], arr["upper"])
    d, p = ks_uniform_test(arr["pit"])
    return ExperimentResult(spec, report, cases, d, p, models, skipped, length)


def restrict(result: ExperimentResult, keys) -> ExperimentResult:
    """Re-score ``result`` on the subset of cases whose (date, station) is in ``keys``."""
    keys = set(keys)
    cases = [c for c in result.cases if c.key in keys]
    return _result(result.spec, cases, result.models, result.skipped, result.training_length)


@dataclass
class SweepResult:
    spec: ExperimentSpec
    lengths: list
    results: dict
    argmin: dict
    reference_length: int | None = None

    @property
    def reports(self) -> dict:
        return {n: r.report for n, r in self.results.items()}

    def reference(self) -> ExperimentResult | None:
        return self.results.get(self.reference_length)


SWEEP_SCORES = {"crps": "mean_crps", "mae": "mae_median", "rmse": "rmse_mean"}


def _run_cell(args):
    ds, spec, n = args
    return n, run_experiment(ds, spec, training_length=n, keep_models=False)


def sweep_training_length(ds: Dataset, spec: ExperimentSpec, jobs: int = 1,
                          reference_length: int | None = None) -> SweepResult:
    """Score every training length in ``spec.sweep`` on one common evaluation period.

    The period starts at ``spec.start`` or, by default, at the first date with
    enough history for the longest length.  Argmins break ties toward the
    shorter length.
    """
    if spec.sweep is None:
        raise ConfigError("sweep range missing")
    lo, hi = spec.sweep
    lengths = list(range(lo, hi + 1))
    _check_kind(ds, spec)
    start = _default_start(ds, spec, hi)
    fixed = replace(spec, start=start)
    cells = [(ds, fixed, n) for n in lengths]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = dict(pool.map(_run_cell, cells))
    else:
        out = dict(_run_cell(c) for c in cells)
    common = set.intersection(*({c.key for c in r.cases} for r in out.values()))
    results = {}
    for n in lengths:
        r = out[n]
        if len(r.cases) != len(common):
            log.info("length %d: restricting to %d common cases", n, len(common))
            r = restrict(r, common)
        results[n] = r
    argmin = {}
    for score, attr in SWEEP_SCORES.items():
        best_n, best_v = None, math.inf
        for n in lengths:
            v = getattr(results[n].report, attr)
            if v < best_v:
                best_n, best_v = n, v
        argmin[score] = (best_n, best_v)
    ref = reference_length if reference_length in results else None
    return SweepResult(fixed, lengths, results, argmin, ref)


def _run_spec(args):
    ds, spec, keep = args
    return run_experiment(ds, spec, keep_models=keep)


@dataclass
class ComparisonRow:
    name: str
    report: ScoreReport
    ks_p: float
    ks_stat: float

    def as_dict(self) -> dict:
        r = self.report
        return {
            "method": self.name,
            "mean_crps": r.mean_crps,
            "mae_median": r.mae_median,
            "mae_mean": r.mae_mean,
            "rmse_median": r.rmse_median,
            "rmse_mean": r.rmse_mean,
            "avg_width": r.avg_width,
            "coverage_pct": 100.0 * r.coverage,
            "ks_p": self.ks_p,
            "n_cases": r.n_cases,
        }


def compare_methods(ds: Dataset, specs, jobs: int = 1, keep_models: bool = False) -> tuple[list, dict]:
    """One row per spec, all scored on the same evaluation cases.

    Returns ``(rows, results)`` with ``results`` keyed by row name.
    """
    specs = list(specs)
    if not specs:
        raise ConfigError("no methods to compare")
    windows = {(s.start, s.end) for s in specs}
    if len(windows) != 1:
        raise ComparabilityError("methods must share the evaluation start and end")
    if specs[0].start is None:
        start = max(_default_start(ds, s, s.training_length) for s in specs)
        specs = [replace(s, start=start) for s in specs]
    names = []
    for s in specs:
        n, k = s.name, 2
        while n in names:
            n, k = f"{s.name}_{k}", k + 1
        names.append(n)
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_spec, [(ds, s, keep_models) for s in specs]))
    else:
        runs = [_run_spec((ds, s, keep_models)) for s in specs]
    keys = [{c.key for c in r.cases} for r in runs]
    common = set.intersection(*keys)
    if not common:
        raise ComparabilityError("methods share no evaluation cases")
    rows, results = [], {}
    for name, r, k in zip(names, runs, keys):
        if k != common:
            r = restrict(r, common)
        results[name] = r
        rows.append(ComparisonRow(name, r.report, r.ks_p, r.ks_stat))
    return rows, results
