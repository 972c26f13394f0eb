"""EMOS: one normal or zero-truncated normal law per case, fitted by minimum CRPS.

The location is ``a0 + sum_k a_k * (sum of group k members)`` and the variance
``b0 + b1 * S^2`` with ``S^2`` the unbiased ensemble variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import ForecastCase, GroupingScheme
from .distributions import Normal, TruncNormal, crps_normal, crps_truncnormal
from .errors import DataError, DegeneracyError, SetupError, ShapeError
from .optimize import ObjectiveSpec, minimize

FAMILIES = ("normal", "truncnormal")


@dataclass(frozen=True)
class EnsembleStats:
    group_sums: tuple
    mean: float
    variance: float


def _stats(X, grouping: GroupingScheme):
    """Group sums, mean and unbiased variance of canonical member rows."""
    sums = np.stack([X[:, grouping.columns(k)].sum(axis=1) for k in range(grouping.m)], axis=1)
    M = X.shape[1]
    mean = X.sum(axis=1) / M
    var = np.sum((X - mean[:, None]) ** 2, axis=1) / (M - 1)
    return sums, mean, var


def ensemble_stats(case, grouping: GroupingScheme) -> EnsembleStats:
    f = case.member_array() if isinstance(case, ForecastCase) else np.asarray(case, dtype=float)
    if f.ndim != 1 or f.size != grouping.n_members:
        raise ShapeError(f"case has {f.size} members but grouping expects {grouping.n_members}")
    if f.size < 2:
        raise ShapeError("ensemble variance needs at least 2 members")
    sums, mean, var = _stats(grouping.canonical(f)[None, :], grouping)
    return EnsembleStats(tuple(float(v) for v in sums[0]), float(mean[0]), float(var[0]))


@dataclass(frozen=True)
class EmosDiagnostics:
    iterations: int = 0
    converged: bool = True
    initial_crps: float = math.nan
    final_crps: float = math.nan
    retries: int = 0


@dataclass(frozen=True)
class EmosModel:
    grouping: GroupingScheme
    family: str
    a0: float
    a: tuple
    b0: float
    b1: float
    diagnostics: EmosDiagnostics = field(default_factory=EmosDiagnostics, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown EMOS family {self.family!r}")
        a = tuple(float(v) for v in self.a)
        if len(a) != self.grouping.m:
            raise ValueError("need one location coefficient per group")
        if any(v < 0 for v in a) or self.b0 < 0 or self.b1 < 0:
            raise ValueError("a_k, b0 and b1 must be >= 0")
        object.__setattr__(self, "a", a)

    @property
    def kind(self) -> str:
        return f"emos_{self.family}"

    def location_scale(self, X):
        """Predictive (mu, variance) arrays for canonical member rows ``X``."""
        sums, _, var = _stats(X, self.grouping)
        mu = self.a0 + sums @ np.asarray(self.a)
        v = self.b0 + self.b1 * var
        return mu, v


def _mean_crps(family, mu, v, y):
    if np.any(~(v > 0)):
        return math.inf
    sigma = np.sqrt(v)
    try:
        c = crps_normal(mu, sigma, y) if family == "normal" else crps_truncnormal(mu, sigma, y)
    except DegeneracyError:
        return math.inf
    return float(np.mean(c))


def fit_emos(
    window,
    grouping: GroupingScheme,
    family: str = "normal",
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> EmosModel:
    """Minimum mean-CRPS estimate over the cases of a training window."""
    if family not in FAMILIES:
        raise ValueError(f"unknown EMOS family {family!r}")
    X = grouping.canonical(np.asarray(window.members, dtype=float))
    y = np.asarray(window.obs, dtype=float)
    keep = ~np.isnan(y)
    X, y = X[keep], y[keep]
    m = grouping.m
    if len(y) < m + 3:
        raise DataError(f"EMOS needs at least {m + 3} training cases, got {len(y)}")
    if family == "truncnormal" and np.any(y < 0):
        raise DataError("truncated normal EMOS needs nonnegative observations")
    sums, mean, var = _stats(X, grouping)
    M = grouping.n_members

    def objective(theta):
        mu = theta[0] + sums @ theta[1:m + 1]
        return _mean_crps(family, mu, theta[m + 1] + theta[m + 2] * var, y)

    a0 = float(np.mean(y) - np.mean(mean))
    b0 = max(float(np.var(y - a0 - mean)), 1e-6)
    x0 = np.concatenate([[a0], np.full(m, 1.0 / M), [b0, 0.1]])
    transforms = ["identity"] + ["square"] * (m + 2)
    retries = 0
    while True:
        start_val = objective(x0)
        if math.isfinite(start_val):
            break
        if retries == 3:
            raise SetupError("EMOS objective is not finite at the initial point")
        retries += 1
        x0[m + 1] *= 10.0
    res = minimize(ObjectiveSpec.from_constrained(objective, x0, transforms), tol=tol, max_iter=max_iter)
    th = res.argmin
    diag = EmosDiagnostics(res.iterations, res.converged, res.initial_value, res.value, retries)
    return EmosModel(grouping, family, float(th[0]), tuple(float(v) for v in th[1:m + 1]),
                     float(th[m + 1]), float(th[m + 2]), diag)


def predict_emos(model: EmosModel, case):
    """Predictive Normal or TruncNormal for one case (ForecastCase or member vector)."""
    g = model.grouping
    f = case.member_array() if isinstance(case, ForecastCase) else np.asarray(case, dtype=float)
    if f.ndim != 1 or f.size != g.n_members:
        raise ShapeError(f"case has {f.size} members but the model expects {g.n_members}")
    mu, v = model.location_scale(g.canonical(f)[None, :])
    if not v[0] > 0:
        raise DegeneracyError("EMOS predictive variance is zero")
    sigma = math.sqrt(float(v[0]))
    if model.family == "normal":
        return Normal(float(mu[0]), sigma)
    return TruncNormal(float(mu[0]), sigma)


def emos_mean_crps(model: EmosModel, window) -> float:
    X = model.grouping.canonical(np.asarray(window.members, dtype=float))
    y = np.asarray(window.obs, dtype=float)
    keep = ~np.isnan(y)
    mu, v = model.location_scale(X[keep])
    return _mean_crps(model.family, mu, v, y[keep])
