import math

import numpy as np
import pytest
from conftest import window_of
from scipy import optimize as sciopt
from scipy import stats

from enscal.data import make_grouping
from enscal.distributions import crps_normal
from enscal.emos import EmosModel, emos_mean_crps, ensemble_stats, fit_emos, predict_emos
from enscal.errors import DataError, DegeneracyError
from enscal.synth import generate

G2 = make_grouping("two_group", 11)


@pytest.fixture(scope="module")
def emos_data():
    return generate("emos_normal", seed=21, n_dates=60, n_stations=10)


def test_ensemble_stats_use_unbiased_variance():
    f = np.array([1.0, 4.0, 2.0, 7.0])
    s = ensemble_stats(f, make_grouping("two_group", 4))
    assert s.group_sums == (1.0, 13.0)
    assert s.mean == 3.5
    assert s.variance == pytest.approx(np.var(f, ddof=1), abs=1e-14)


def test_predictive_from_coefficients():
    g = make_grouping("two_group", 3)
    m = EmosModel(g, "normal", 1.0, (0.5, 0.25), 2.0, 0.5)
    d = predict_emos(m, np.array([2.0, 4.0, 6.0]))
    assert d.mu == pytest.approx(1.0 + 0.5 * 2 + 0.25 * 10)
    assert d.sigma == pytest.approx(math.sqrt(2.0 + 0.5 * 4.0))


def test_zero_variance_is_degenerate():
    g = make_grouping("two_group", 3)
    m = EmosModel(g, "normal", 0.0, (0.3, 0.3), 0.0, 1.0)
    with pytest.raises(DegeneracyError):
        predict_emos(m, np.array([1.0, 1.0, 1.0]))


def test_negative_coefficients_rejected():
    with pytest.raises(ValueError):
        EmosModel(G2, "normal", 0.0, (-0.1, 0.1), 1.0, 1.0)


def test_fit_improves_on_start_and_recovers_generator(emos_data):
    ds, truth = emos_data
    w = window_of(ds)
    m = fit_emos(w, G2)
    assert m.diagnostics.final_crps <= m.diagnostics.initial_crps
    assert m.diagnostics.final_crps <= emos_mean_crps(truth.model, w) + 1e-12
    assert m.b1 == pytest.approx(truth.params["b1"], abs=0.2)
    assert m.a0 == pytest.approx(truth.params["a0"], abs=1.0)


def test_fit_agrees_with_scipy_on_the_same_objective(emos_data):
    ds, _ = emos_data
    w = window_of(ds)
    m = fit_emos(w, G2)
    X = G2.canonical(w.members)
    sums = np.stack([X[:, [0]].sum(1), X[:, 1:].sum(1)], axis=1)
    var = X.var(axis=1, ddof=1)

    def obj(th):
        a0, a1, a2, b0, b1 = th[0], th[1] ** 2, th[2] ** 2, th[3] ** 2, th[4] ** 2
        v = b0 + b1 * var
        return np.mean(crps_normal(a0 + a1 * sums[:, 0] + a2 * sums[:, 1], np.sqrt(v), w.obs))

    x0 = [m.a0, math.sqrt(m.a[0]), math.sqrt(m.a[1]), math.sqrt(m.b0), math.sqrt(m.b1)]
    ref = sciopt.minimize(obj, x0, method="Nelder-Mead",
                          options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000})
    assert m.diagnostics.final_crps <= ref.fun + 1e-7


def test_truncnormal_fit_is_nonnegative_and_no_worse_than_truth():
    ds, truth = generate("emos_truncnormal", seed=4, n_dates=60, n_stations=10)
    w = window_of(ds)
    m = fit_emos(w, G2, "truncnormal")
    assert m.kind == "emos_truncnormal"
    assert m.diagnostics.final_crps <= emos_mean_crps(truth.model, w) + 1e-12
    d = predict_emos(m, ds.members[0])
    assert d.cdf(0.0) == 0.0 and d.quantile(0.05) >= 0


def test_truncnormal_rejects_negative_observations(emos_data):
    ds, _ = emos_data
    with pytest.raises(DataError):
        fit_emos(window_of(ds), G2, "truncnormal")


def test_too_few_cases(small_window):
    from enscal.data import TrainingWindow

    w = TrainingWindow(small_window.target_date, 1, (), small_window.case_index[:4],
                       small_window.members[:4], small_window.obs[:4])
    with pytest.raises(DataError):
        fit_emos(w, make_grouping("two_group", 3))


def test_emos_pit_of_generator_is_uniform(emos_data):
    ds, truth = emos_data
    pits = [truth.predictive(ds.members[i]).cdf(ds.obs[i]) for i in range(len(ds))]
    assert stats.kstest(pits, "uniform").pvalue > 0.01


# -- worked examples -----------------------------------------------------------

def test_stats_by_hand():
    s = ensemble_stats(np.array([1.0, 2.0, 3.0]), make_grouping("exchangeable", 3))
    assert (s.mean, s.variance) == (2.0, 1.0)
    assert ensemble_stats(np.full(4, 7.5), make_grouping("two_group", 4)).variance == 0.0
    s = ensemble_stats(np.arange(1.0, 12.0), G2)
    assert s.group_sums == (1.0, 65.0)
    assert s.variance == 11.0


def test_deterministic_data_recovers_coefficients():
    r = np.random.default_rng(17)
    X = r.normal(10, 3, size=(400, 11)) + r.normal(0, 5, size=(400, 1))
    sums = np.column_stack([X[:, 0], X[:, 1:].sum(axis=1)])
    y = 1.5 + 0.2 * sums[:, 0] + 0.08 * sums[:, 1] + 1e-3 * r.standard_normal(400)
    from enscal.data import TrainingWindow
    import datetime as dt

    w = TrainingWindow(dt.date(2020, 1, 1), 1, (), np.arange(400), X, y)
    m = fit_emos(w, G2, tol=1e-12)
    assert m.a[0] == pytest.approx(0.2, abs=0.01)
    assert m.a[1] == pytest.approx(0.08, abs=0.01)
    assert np.mean(m.location_scale(X)[1]) < 1e-2


def test_fit_is_invariant_to_within_group_permutation(emos_data):
    ds, _ = emos_data
    w = window_of(ds)
    r = np.random.default_rng(0)
    X = np.array(w.members)
    for row in X:
        row[1:] = r.permutation(row[1:])
    from dataclasses import replace

    assert fit_emos(replace(w, members=X), G2) == fit_emos(w, G2)


def test_predictive_examples():
    g = make_grouping("two_group", 3)
    d = predict_emos(EmosModel(g, "normal", 0.0, (1.0, 1.0), 1.0, 0.0), np.zeros(3))
    assert (d.mu, d.sigma) == (0.0, 1.0)
    m = EmosModel(g, "normal", 0.0, (1.0, 1.0), 2.0, 0.0)
    assert predict_emos(m, np.array([1.0, 5.0, 9.0])).sigma == predict_emos(m, np.array([1.0, 1.1, 1.2])).sigma
    m = EmosModel(g, "normal", 0.0, (1.0, 1.0), 2.0, 3.0)
    assert predict_emos(m, np.full(3, 4.0)).sigma == math.sqrt(2.0)


def test_normal_mean_equals_median(emos_data):
    ds, _ = emos_data
    m = fit_emos(window_of(ds), G2)
    for i in range(5):
        d = predict_emos(m, ds.members[i])
        assert d.mean() == pytest.approx(d.quantile(0.5), abs=1e-9)
