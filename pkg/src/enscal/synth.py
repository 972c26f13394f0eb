"""Synthetic ensemble datasets whose generating law is a known predictive model.

Each scenario draws a latent "true state" per case, perturbs it into ``M``
members and then draws the observation from the named model given those
members, so the generator's own predictive distribution is an exact oracle.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .bma import BiasCorrection, BmaGammaModel, BmaNormalModel, BmaTruncNormalModel, predict_bma
from .data import Dataset, GroupingScheme, make_grouping
from .emos import EmosModel, predict_emos
from .errors import ConfigError

SCENARIOS = (
    "bma_normal",
    "bma_gamma",
    "bma_truncnormal",
    "emos_normal",
    "emos_truncnormal",
    "underdispersive_raw",
)

# Six dates without data.  The source study drops six days between June 2012
# and March 2013 without naming them; these are placeholders with that property.
STUDY_MISSING_DAYS = (
    dt.date(2012, 7, 16),
    dt.date(2012, 9, 3),
    dt.date(2012, 10, 22),
    dt.date(2012, 12, 25),
    dt.date(2013, 1, 28),
    dt.date(2013, 3, 4),
)


def study_calendar(missing=STUDY_MISSING_DAYS) -> list[dt.date]:
    """2012-04-01 .. 2013-03-31 without the missing days."""
    start, end = dt.date(2012, 4, 1), dt.date(2013, 3, 31)
    days = [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]
    gone = set(missing)
    return [d for d in days if d not in gone]


DEFAULTS = {
    "bma_normal": dict(omega=0.3, sigma=1.0, beta0=0.0, beta1=1.0, loc=15.0, climate_sd=200.0, spread=3.0),
    "bma_gamma": dict(omega=0.3, b0=0.2, b1=0.9, c0=0.4, c1=0.2, loc=10.0, climate_sd=6.0, spread=0.5),
    "bma_truncnormal": dict(omega=0.2, sigma=0.8, beta0=0.0, beta1=1.0, loc=6.0, climate_sd=3.0, spread=1.5),
    "emos_normal": dict(a0=2.0, a=math.nan, b0=1.0, b1=0.5, loc=15.0, climate_sd=10.0, spread=1.5),
    "emos_truncnormal": dict(a0=0.5, a=math.nan, b0=0.5, b1=0.5, loc=6.0, climate_sd=3.0, spread=1.0),
    "underdispersive_raw": dict(bias=0.5, member_sd=0.6, obs_sd=2.0, loc=15.0, climate_sd=8.0),
}

NONNEGATIVE = {"bma_gamma", "bma_truncnormal", "emos_truncnormal"}


@dataclass
class SynthTruth:
    scenario: str
    params: dict
    grouping: GroupingScheme
    model: object = field(repr=False, default=None)
    case_crps: np.ndarray = field(repr=False, default=None)

    @property
    def mean_crps(self) -> float:
        return float(np.mean(self.case_crps))

    def predictive(self, members):
        if self.scenario == "underdispersive_raw":
            p = self.params
            M = len(members)
            prec = 1.0 / p["climate_sd"] ** 2 + M / p["member_sd"] ** 2
            post_mean = (p["loc"] / p["climate_sd"] ** 2
                         + np.sum(np.asarray(members) - p["bias"]) / p["member_sd"] ** 2) / prec
            from .distributions import Normal

            return Normal(post_mean, math.sqrt(1.0 / prec + p["obs_sd"] ** 2))
        if self.scenario.startswith("emos"):
            return predict_emos(self.model, np.asarray(members, dtype=float))
        return predict_bma(self.model, np.asarray(members, dtype=float))


def _group_weights(omega: float, grouping: GroupingScheme) -> np.ndarray:
    """Control (group 1) weight ``omega``; the rest shared equally by the other members."""
    sizes = np.asarray(grouping.sizes)
    if not 0 <= omega * sizes[0] <= 1:
        raise ConfigError("omega out of range for this grouping")
    rest = (1.0 - omega * sizes[0]) / (sizes[1:].sum()) if grouping.m > 1 else None
    w = np.full(grouping.m, rest if rest is not None else omega)
    w[0] = omega
    if grouping.m == 1:
        w[0] = 1.0 / sizes[0]
    return w


def _center(rng, n, p, nonneg):
    if nonneg:
        mean, sd = p["loc"], p["climate_sd"]
        return rng.gamma((mean / sd) ** 2, sd * sd / mean, size=n)
    return p["loc"] + p["climate_sd"] * rng.standard_normal(n)


def _members(rng, center, M, spread, nonneg):
    n = center.size
    s = spread * np.exp(0.3 * rng.standard_normal(n))
    X = center[:, None] + s[:, None] * rng.standard_normal((n, M))
    return np.abs(X) if nonneg else X


def generate(
    scenario: str,
    seed: int = 0,
    n_dates: int = 300,
    n_stations: int = 10,
    n_members: int = 11,
    grouping: str | GroupingScheme = "two_group",
    start: dt.date = dt.date(2012, 4, 1),
    dates=None,
    **params,
) -> tuple[Dataset, SynthTruth]:
    """Draw a dataset from ``scenario``; returns it with the generator's truth.

    ``dates`` overrides ``start``/``n_dates`` with an explicit calendar.
    Unknown parameter names raise :class:`ConfigError`.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    p = dict(DEFAULTS[scenario])
    unknown = set(params) - set(p)
    if unknown:
        raise ConfigError(f"unknown parameters for {scenario}: {sorted(unknown)}")
    p.update({k: float(v) for k, v in params.items()})
    if n_stations < 1 or n_members < 2:
        raise ConfigError("need at least one station and two members")
    g = grouping if isinstance(grouping, GroupingScheme) else make_grouping(grouping, n_members)
    if g.n_members != n_members:
        raise ConfigError("grouping does not match the member count")
    if dates is None:
        if n_dates < 1:
            raise ConfigError("n_dates must be >= 1")
        dates = [start + dt.timedelta(days=i) for i in range(n_dates)]
    dates = list(dates)
    n = len(dates) * n_stations
    stations = [f"S{i + 1:02d}" for i in range(n_stations)]
    rng = np.random.default_rng(seed)
    nonneg = scenario in NONNEGATIVE
    center = _center(rng, n, p, nonneg)

    if scenario == "underdispersive_raw":
        X = center[:, None] + p["bias"] + p["member_sd"] * rng.standard_normal((n, n_members))
        y = center + p["obs_sd"] * rng.standard_normal(n)
        model = None
    elif scenario.startswith("emos"):
        X = _members(rng, center, n_members, p["spread"], nonneg)
        a = np.full(g.m, 1.0 / n_members) if math.isnan(p["a"]) else np.full(g.m, p["a"])
        p["a"] = tuple(float(v) for v in a)
        model = EmosModel(g, scenario.split("_", 1)[1], p["a0"], p["a"], p["b0"], p["b1"])
        mu, v = model.location_scale(g.canonical(X))
        sd = np.sqrt(v)
        if model.family == "normal":
            y = mu + sd * rng.standard_normal(n)
        else:
            y = _truncnormal_draw(rng, mu, sd)
    else:
        X = _members(rng, center, n_members, p["spread"], nonneg)
        w = _group_weights(p["omega"], g)
        member_w = w[g.member_group]
        pick = np.array([rng.choice(n_members, p=member_w / member_w.sum()) for _ in range(n)])
        f = X[np.arange(n), pick]
        if scenario == "bma_normal":
            model = BmaNormalModel(g, BiasCorrection("linear", (p["beta0"],) * g.m, (p["beta1"],) * g.m),
                                   tuple(w), p["sigma"])
            y = p["beta0"] + p["beta1"] * f + p["sigma"] * rng.standard_normal(n)
        elif scenario == "bma_truncnormal":
            model = BmaTruncNormalModel(g, (p["beta0"],) * g.m, (p["beta1"],) * g.m, p["sigma"], tuple(w))
            y = _truncnormal_draw(rng, p["beta0"] + p["beta1"] * f, np.full(n, p["sigma"]))
        else:
            model = BmaGammaModel(g, p["b0"], p["b1"], p["c0"], p["c1"], tuple(w))
            mean = p["b0"] + p["b1"] * f
            sd = p["c0"] + p["c1"] * f
            y = rng.gamma((mean / sd) ** 2, sd * sd / mean)
    ds = Dataset(
        [d for d in dates for _ in stations],
        [s for _ in dates for s in stations],
        X,
        y,
        "nonnegative" if nonneg else "real_line",
    )
    truth = SynthTruth(scenario, p, g, model)
    truth.case_crps = np.array([truth.predictive(ds.members[i]).crps(ds.obs[i]) for i in range(len(ds))])
    return ds, truth


def _truncnormal_draw(rng, mu, sd):
    from scipy.special import ndtr, ndtri

    lo = ndtr(-mu / sd)
    u = lo + (1.0 - lo) * rng.random(mu.shape)
    return np.maximum(mu + sd * ndtri(u), 0.0)
