import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from enscal.distributions import Empirical, Normal, PointMass, TruncNormal
from enscal.errors import DomainError, ShapeError
from enscal.verification import (
    NOMINAL_LEVEL,
    central_interval,
    crps_ensemble,
    kolmogorov_sf,
    ks_uniform_test,
    pit_histogram,
    pit_value,
    rank_histogram,
    score_report,
    summarize,
    verification_rank,
)


def crps_empirical_by_integration(x, y):
    """Integrate the squared step-CDF difference piece by piece."""
    x = np.sort(x)
    pts = np.unique(np.concatenate([x, [y]]))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (a + b)
        F = np.mean(x <= mid)
        total += integrate.quad(lambda t: (F - (t >= y)) ** 2, a, b)[0]
    return total


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=15), st.floats(-60, 60))
def test_pairwise_formula_matches_integral(members, y):
    x = np.asarray(members)
    assert crps_ensemble(x, y) == pytest.approx(crps_empirical_by_integration(x, y), abs=1e-10)


def test_pairwise_formula_against_naive_double_sum(rng):
    x = rng.normal(size=9)
    y = 0.3
    naive = np.mean(np.abs(x - y)) - 0.5 * np.mean(np.abs(x[:, None] - x[None, :]))
    assert crps_ensemble(x, y) == pytest.approx(naive, abs=1e-14)


def test_single_member_crps_is_absolute_error():
    assert crps_ensemble([2.0], 5.5) == 3.5


def test_rank_without_ties():
    assert verification_rank([1.0, 2.0, 3.0], 0.0) == 1
    assert verification_rank([1.0, 2.0, 3.0], 2.5) == 3
    assert verification_rank([1.0, 2.0, 3.0], 9.0) == 4


def test_ties_are_broken_uniformly():
    r = np.random.default_rng(0)
    ranks = [verification_rank([1.0, 1.0, 1.0], 1.0, r) for _ in range(4000)]
    counts = np.bincount(ranks, minlength=5)[1:]
    assert counts.sum() == 4000
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)


def test_rank_histogram_counts_every_rank():
    assert rank_histogram(range(1, 13), 11).tolist() == [1] * 12
    with pytest.raises(DomainError):
        rank_histogram([0], 3)


def test_pit_histogram_examples():
    edges, counts = pit_histogram([0.5] * 7, 11)
    assert counts[5] == 7 and counts.sum() == 7
    assert edges[0] == 0 and edges[-1] == 1
    _, counts = pit_histogram([0.0, 1.0], 4)
    assert counts.tolist() == [1, 0, 0, 1]


def test_pit_of_continuous_law_is_its_cdf():
    d = Normal(1.0, 2.0)
    assert pit_value(d, 0.0) == pytest.approx(stats.norm.cdf(0.0, 1.0, 2.0), abs=1e-15)


def test_pit_at_atom_is_randomised_between_limits():
    r = np.random.default_rng(1)
    pits = np.array([pit_value(PointMass(2.0), 2.0, r) for _ in range(2000)])
    assert pits.min() >= 0 and pits.max() <= 1
    assert abs(pits.mean() - 0.5) < 0.03


def test_ks_statistic_and_pvalue_match_scipy(rng):
    u = rng.random(500) ** 1.1
    d, p = ks_uniform_test(u)
    ref = stats.kstest(u, "uniform")
    assert d == pytest.approx(ref.statistic, abs=1e-15)
    assert p == pytest.approx(stats.kstwobign.sf(math.sqrt(u.size) * d), abs=1e-12)


@given(st.floats(0.05, 3.0))
def test_kolmogorov_tail_matches_scipy(t):
    assert kolmogorov_sf(t) == pytest.approx(stats.kstwobign.sf(t), abs=1e-11)


def test_pits_from_true_law_pass_ks(rng):
    y = rng.normal(size=2000)
    _, p = ks_uniform_test(stats.norm.cdf(y))
    assert p > 0.01


def test_central_interval_of_normal():
    lo, hi = central_interval(Normal(0.0, 1.0), NOMINAL_LEVEL)
    assert lo == pytest.approx(stats.norm.ppf(1 / 12), abs=1e-12)
    assert hi == pytest.approx(stats.norm.ppf(11 / 12), abs=1e-12)


def test_central_interval_of_ensemble_is_its_range():
    assert central_interval(Empirical([3.0, -1.0, 2.0])) == (-1.0, 3.0)


def test_central_interval_of_truncnormal_is_nonnegative():
    lo, hi = central_interval(TruncNormal(0.2, 1.0))
    assert 0 <= lo < hi


def test_summarize_by_hand():
    r = summarize([1.0, 3.0], [0.0, 2.0], [1.0, 1.0], [1.0, 1.0], [0.0, 2.0], [2.0, 4.0])
    assert r.mean_crps == 2.0
    assert r.mae_median == 1.0 and r.mae_mean == 0.0
    assert r.rmse_median == 1.0 and r.rmse_mean == 0.0
    assert r.avg_width == 2.0 and r.coverage == 0.5 and r.n_cases == 2


def test_score_report_rejects_length_mismatch():
    with pytest.raises(ShapeError):
        score_report([Normal(0, 1)], None, None, [0.0, 1.0])


def test_score_report_default_point_forecasts():
    rep = score_report([Normal(0.0, 1.0), Normal(2.0, 1.0)], None, None, [0.0, 1.0])
    assert rep.mae_median == pytest.approx(0.5)
    assert rep.mean_crps == pytest.approx(np.mean([Normal(0, 1).crps(0.0), Normal(2, 1).crps(1.0)]))


# -- worked examples -----------------------------------------------------------

def test_rank_examples():
    assert verification_rank([1.0, 2.0, 3.0], 0.5) == 1
    assert verification_rank([1.0, 2.0, 3.0], 10.0) == 4
    r = np.random.default_rng(5)
    ranks = [verification_rank([1.0, 1.0, 2.0], 1.0, r) for _ in range(3000)]
    counts = np.bincount(ranks, minlength=4)[1:]
    assert set(ranks) == {1, 2, 3}
    assert stats.chisquare(counts).pvalue > 0.01


def test_pit_examples():
    assert pit_value(Normal(0.0, 1.0), 0.0) == 0.5
    assert pit_value(TruncNormal(1.0, 1.0), 0.0) == 0.0
    for d, y in ((Normal(2.0, 3.0), -1.3), (TruncNormal(1.0, 1.0), 2.2)):
        assert d.quantile(pit_value(d, y)) == pytest.approx(y, abs=1e-8)


def test_ks_examples(rng):
    assert ks_uniform_test([0.25, 0.5, 0.75])[0] == pytest.approx(0.25, abs=1e-15)
    n = 40
    assert ks_uniform_test((np.arange(1, n + 1) - 0.5) / n)[0] == pytest.approx(0.5 / n, abs=1e-15)
    assert ks_uniform_test(np.random.default_rng(1000).random(1000))[1] > 0.01


def test_interval_examples():
    assert (1 - NOMINAL_LEVEL) / 2 == pytest.approx(1 / 12)
    lo, hi = central_interval(Normal(0.0, 1.0), 0.8333)
    assert lo == pytest.approx(-1.3830, abs=1e-3) and hi == pytest.approx(1.3830, abs=1e-3)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12, unique=True), st.floats(-12, 12))
def test_raw_interval_covers_iff_rank_is_interior(members, y):
    lo, hi = central_interval(Empirical(members))
    rank = verification_rank(members, y)
    if y in members:
        return
    assert (lo <= y <= hi) == (rank not in (1, len(members) + 1))


def test_perfect_and_point_mass_reports():
    y = np.array([1.0, -2.0, 3.5])
    r = summarize([0, 0, 0], y, y, y, y - 1, y + 1)
    assert r.mae_median == r.rmse_mean == 0.0
    dists = [PointMass(v) for v in (0.0, 1.0, 2.0)]
    rep = score_report(dists, None, None, y)
    assert rep.mean_crps == pytest.approx(rep.mae_median, abs=1e-15)
