"""Scores and calibration diagnostics for probabilistic forecasts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .distributions import Distribution, Empirical
from .errors import DomainError, ShapeError

NOMINAL_LEVEL = 10 / 12


def crps_ensemble(members, obs: float) -> float:
    """CRPS of the empirical ensemble law.

    ``mean|x_i - y| - sum_ij |x_i - x_j| / (2 M^2)``; the double sum is taken
    over the sorted members in O(M log M).
    """
    x = np.sort(np.asarray(members, dtype=float).reshape(-1))
    M = x.size
    if M == 0:
        raise DomainError("ensemble is empty")
    first = np.mean(np.abs(x - obs))
    # sum_{i,j} |x_i - x_j| = 2 * sum_i (2i - M + 1) x_(i) with 0-based ranks
    pair = 2.0 * np.dot(2.0 * np.arange(M) - M + 1, x)
    return float(first - pair / (2.0 * M * M))


def verification_rank(members, obs: float, rng=None) -> int:
    """Rank of ``obs`` among the members (1..M+1), ties broken at random."""
    x = np.asarray(members, dtype=float).reshape(-1)
    below = int(np.sum(x < obs))
    ties = int(np.sum(x == obs))
    if ties == 0:
        return below + 1
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return below + 1 + int(rng.integers(0, ties + 1))


def rank_histogram(ranks, n_members: int) -> np.ndarray:
    ranks = np.asarray(ranks, dtype=int)
    if np.any((ranks < 1) | (ranks > n_members + 1)):
        raise DomainError("ranks must lie in 1..M+1")
    return np.bincount(ranks - 1, minlength=n_members + 1)


def pit_value(dist: Distribution, obs: float, rng=None) -> float:
    """Predictive CDF at the observation.

    Where the law has an atom at ``obs`` the PIT is drawn uniformly between
    the left and right limits of the CDF.
    """
    hi = float(dist.cdf(obs))
    lo = float(dist.cdf_left(obs))
    if hi - lo > 0:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return lo + (hi - lo) * float(rng.random())
    return hi


def pit_histogram(pits, bins: int = 11) -> tuple[np.ndarray, np.ndarray]:
    """Counts of PIT values in ``bins`` equal-width bins on [0, 1]."""
    pits = np.asarray(pits, dtype=float)
    if bins < 1:
        raise DomainError("need at least one bin")
    if np.any((pits < 0) | (pits > 1)):
        raise DomainError("PIT values must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.minimum((pits * bins).astype(int), bins - 1)
    return edges, np.bincount(idx, minlength=bins)


def kolmogorov_sf(t: float, term_tol: float = 1e-12) -> float:
    """Asymptotic Kolmogorov tail ``P(sqrt(n) D > t)``."""
    if t <= 0:
        return 1.0
    total = 0.0
    j = 1
    while True:
        term = math.exp(-2.0 * j * j * t * t)
        total += term if j % 2 else -term
        if term < term_tol:
            break
        j += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_uniform_test(pits) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic against U(0, 1) with asymptotic p-value."""
    u = np.sort(np.asarray(pits, dtype=float).reshape(-1))
    n = u.size
    if n == 0:
        raise DomainError("KS test needs at least one value")
    if np.any((u < 0) | (u > 1)):
        raise DomainError("PIT values must lie in [0, 1]")
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - u)
    d_minus = np.max(u - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    return d, kolmogorov_sf(math.sqrt(n) * d)


def central_interval(dist: Distribution, level: float = NOMINAL_LEVEL) -> tuple[float, float]:
    if not 0 < level < 1:
        raise DomainError("interval level must lie in (0, 1)")
    half = (1.0 - level) / 2.0
    if isinstance(dist, Empirical):
        # the raw ensemble's nominal interval is its range
        return float(dist.values[0]), float(dist.values[-1])
    lo, hi = float(dist.quantile(half)), float(dist.quantile(1.0 - half))
    return lo, hi


@dataclass(frozen=True)
class ScoreReport:
    mean_crps: float
    mae_median: float
    mae_mean: float
    rmse_median: float
    rmse_mean: float
    avg_width: float
    coverage: float
    n_cases: int

    def as_dict(self) -> dict:
        return asdict(self)


def summarize(crps, medians, means, obs, lo, hi) -> ScoreReport:
    """Aggregate per-case quantities into a :class:`ScoreReport`."""
    crps, medians, means, obs, lo, hi = (np.asarray(a, dtype=float) for a in (crps, medians, means, obs, lo, hi))
    n = obs.size
    if n == 0:
        raise ShapeError("no cases to score")
    if not all(a.size == n for a in (crps, medians, means, lo, hi)):
        raise ShapeError("per-case inputs must have equal lengths")
    return ScoreReport(
        mean_crps=float(np.mean(crps)),
        mae_median=float(np.mean(np.abs(medians - obs))),
        mae_mean=float(np.mean(np.abs(means - obs))),
        rmse_median=float(math.sqrt(np.mean((medians - obs) ** 2))),
        rmse_mean=float(math.sqrt(np.mean((means - obs) ** 2))),
        avg_width=float(np.mean(hi - lo)),
        coverage=float(np.mean((obs >= lo) & (obs <= hi))),
        n_cases=int(n),
    )


def score_report(
    dists: Sequence[Distribution],
    point_medians: Sequence[float] | None,
    point_means: Sequence[float] | None,
    obs: Sequence[float],
    level: float = NOMINAL_LEVEL,
) -> ScoreReport:
    """Scores of predictive laws against observations.

    Point forecasts default to each law's median and mean.
    """
    n = len(obs)
    if len(dists) != n or (point_medians is not None and len(point_medians) != n) or (
        point_means is not None and len(point_means) != n
    ):
        raise ShapeError("dists, point forecasts and observations must have equal lengths")
    crps = [d.crps(y) for d, y in zip(dists, obs)]
    meds = point_medians if point_medians is not None else [d.median() for d in dists]
    means = point_means if point_means is not None else [d.mean() for d in dists]
    bounds = np.array([central_interval(d, level) for d in dists]).reshape(-1, 2)
    return summarize(crps, meds, means, obs, bounds[:, 0], bounds[:, 1])
