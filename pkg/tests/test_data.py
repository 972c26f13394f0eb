import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from enscal.data import (
    Dataset,
    ForecastCase,
    GroupingScheme,
    dataset_to_string,
    earliest_start,
    load_dataset,
    make_grouping,
    make_window,
    parse_grouping,
    rolling_windows,
    window_plan,
)
from enscal.errors import DataError, GroupingError, ParseError, SchemaError, WindowError
from enscal.synth import STUDY_MISSING_DAYS, study_calendar

D0 = dt.date(2012, 4, 1)


def daily(n, start=D0):
    return [start + dt.timedelta(days=i) for i in range(n)]


def toy_dataset(dates, n_stations=2, M=3, seed=0):
    r = np.random.default_rng(seed)
    ds_dates = [d for d in dates for _ in range(n_stations)]
    st_ids = [f"S{j}" for _ in dates for j in range(n_stations)]
    X = r.normal(size=(len(ds_dates), M))
    return Dataset(ds_dates, st_ids, X, X.mean(axis=1) + r.normal(size=len(ds_dates)))


def test_two_group_scheme():
    g = make_grouping("two_group", 11)
    assert g.groups == ((1,), tuple(range(2, 12)))
    assert g.sizes == (1, 10)
    assert g.to_string() == "1|2-11"


def test_three_group_scheme_splits_perturbed_by_parity():
    g = make_grouping("three_group", 11)
    # perturbed members 1,3,5,... are ensemble members 2,4,6,...
    assert g.groups == ((1,), (2, 4, 6, 8, 10), (3, 5, 7, 9, 11))
    assert sum(g.sizes) == 11


def test_grouping_must_partition_members():
    with pytest.raises(GroupingError):
        GroupingScheme(((1, 2), (2, 3)))
    with pytest.raises(GroupingError):
        GroupingScheme(((1,), (3,)))
    with pytest.raises(GroupingError):
        parse_grouping("1|2-5", 11)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=5))
def test_grouping_string_round_trip(sizes):
    groups, k = [], 1
    for s in sizes:
        groups.append(tuple(range(k, k + s)))
        k += s
    g = GroupingScheme(tuple(groups))
    assert GroupingScheme.from_string(g.to_string()) == g


@given(st.lists(st.floats(-100, 100), min_size=5, max_size=5), st.permutations(range(4)))
def test_canonical_form_ignores_within_group_order(vals, perm):
    g = make_grouping("two_group", 5)
    x = np.asarray(vals)
    y = x.copy()
    y[1:] = x[1:][list(perm)]
    assert np.array_equal(g.canonical(x), g.canonical(y))
    assert g.canonical(x)[0] == x[0]


def test_load_minimal_csv_with_missing_obs():
    text = "date,station,obs,m1,m2\n2012-04-01,A,1.5,1.0,2.0\n2012-04-01,B,,0.5,0.7\n"
    ds = load_dataset(io.StringIO(text))
    assert len(ds) == 2 and ds.n_members == 2
    assert ds.missing.tolist() == [False, True]
    assert ds.case(1).missing


def test_field_count_mismatch_names_line():
    text = "date,station,obs,m1,m2\n2012-04-01,A,1.5,1.0,2.0\n2012-04-02,A,1.5,1.0\n"
    with pytest.raises(SchemaError, match="line 3"):
        load_dataset(io.StringIO(text))


def test_bad_number_names_line():
    text = "date,station,obs,m1,m2\n2012-04-01,A,1.5,1.0,x\n"
    with pytest.raises(ParseError) as err:
        load_dataset(io.StringIO(text))
    assert err.value.line == 2


def test_missing_column_and_negative_obs_rejected():
    with pytest.raises(SchemaError):
        load_dataset(io.StringIO("date,obs,m1,m2\n"))
    with pytest.raises(ParseError):
        load_dataset(io.StringIO("date,station,obs,m1,m2\n2012-04-01,A,-1,1,2\n"), variable_kind="nonnegative")


def test_duplicate_case_rejected():
    with pytest.raises(DataError):
        Dataset([D0, D0], ["A", "A"], [[1, 2], [1, 2]], [0, 0])


case_strategy = st.tuples(
    st.integers(0, 40),
    st.sampled_from(["A", "B", "C"]),
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
    st.one_of(st.just(float("nan")), st.floats(-1e6, 1e6)),
)


@given(st.lists(case_strategy, max_size=20, unique_by=lambda c: (c[0], c[1])))
def test_csv_round_trip_is_lossless(rows):
    cases = [ForecastCase(D0 + dt.timedelta(days=d), s, tuple(m), y) for d, s, m, y in rows]
    if not cases:
        return
    ds = Dataset.from_cases(cases)
    back = load_dataset(io.StringIO(dataset_to_string(ds)))
    assert back.dates == ds.dates and back.station_ids == ds.station_ids
    assert np.array_equal(back.members, ds.members)
    assert np.array_equal(back.obs, ds.obs, equal_nan=True)
    assert dataset_to_string(back) == dataset_to_string(ds)


def test_windows_use_prior_data_dates_only():
    dates = [d for d in daily(20) if d.day not in (5, 6)]
    ds = toy_dataset(dates)
    for window, cases in rolling_windows(ds, 5, D0 + dt.timedelta(days=10)):
        assert len(window.dates) == 5
        assert max(window.dates) < window.target_date
        assert all(c.date == window.target_date for c in cases)
        # the most recent data dates, skipping the gap
        prior = [d for d in ds.unique_dates if d < window.target_date]
        assert window.dates == tuple(prior[-5:])


def test_window_across_missing_days_counts_data_dates():
    dates = [d for d in daily(12) if d != dt.date(2012, 4, 8)]
    ds = toy_dataset(dates)
    plan = dict(window_plan(ds, 3, dt.date(2012, 4, 10)))
    assert plan[dt.date(2012, 4, 10)] == (dt.date(2012, 4, 6), dt.date(2012, 4, 7), dt.date(2012, 4, 9))


def test_window_skip_days_leaves_a_gap():
    ds = toy_dataset(daily(40))
    plan = dict(window_plan(ds, 30, dt.date(2012, 5, 10), skip_days=2))
    w = plan[dt.date(2012, 5, 10)]
    assert w[-1] == dt.date(2012, 5, 7)
    assert len(w) == 30


def test_infeasible_start_reports_earliest_start():
    ds = toy_dataset(daily(20))
    with pytest.raises(WindowError) as err:
        window_plan(ds, 10, D0)
    assert err.value.earliest_start == D0 + dt.timedelta(days=10)
    assert earliest_start(ds, 10) == D0 + dt.timedelta(days=10)


def test_window_keeps_only_cases_with_observations():
    ds = Dataset([D0, D0, D0 + dt.timedelta(1)], ["A", "B", "A"], [[1, 2], [3, 4], [5, 6]],
                 [1.0, float("nan"), 2.0])
    w = make_window(ds, D0 + dt.timedelta(2), [D0, D0 + dt.timedelta(1)])
    assert w.n_cases == 3 and w.n_fit_cases == 2


def test_study_calendar_has_359_dates():
    cal = study_calendar()
    assert len(cal) == 365 - 6
    assert not set(STUDY_MISSING_DAYS) & set(cal)
    assert all(dt.date(2012, 6, 1) <= d <= dt.date(2013, 3, 31) for d in STUDY_MISSING_DAYS)


# -- worked examples -----------------------------------------------------------

def test_two_rows_eleven_members():
    hdr = "date,station,obs," + ",".join(f"m{k}" for k in range(1, 12)) + "\n"
    rows = "".join(f"2012-04-01,{s},1.0," + ",".join(["2.0"] * 11) + "\n" for s in "AB")
    ds = load_dataset(io.StringIO(hdr + rows))
    assert len(ds) == 2 and ds.n_members == 11


def test_short_row_after_full_rows_is_schema_error():
    hdr = "date,station,obs," + ",".join(f"m{k}" for k in range(1, 12)) + "\n"
    good = "2012-04-01,A,1.0," + ",".join(["2.0"] * 11) + "\n"
    short = "2012-04-02,A,1.0," + ",".join(["2.0"] * 10) + "\n"
    with pytest.raises(SchemaError):
        load_dataset(io.StringIO(hdr + good + short))


def test_thirty_dates_ten_stations_give_300_training_cases():
    ds = toy_dataset(daily(31), n_stations=10)
    (target, dates), = window_plan(ds, 30, D0 + dt.timedelta(days=30))
    assert make_window(ds, target, dates).n_cases == 300


@pytest.mark.parametrize("kind,sizes", [("two_group", (1, 10)), ("three_group", (1, 5, 5))])
def test_group_sizes(kind, sizes):
    assert make_grouping(kind, 11).sizes == sizes


def test_custom_singletons():
    g = make_grouping("custom", 3, [[1], [2], [3]])
    assert g.m == 3 and g.sizes == (1, 1, 1)


def test_seventy_dates_length_sixty_gives_ten_windows():
    ds = toy_dataset(daily(70), n_stations=1)
    plan = window_plan(ds, 60, ds.unique_dates[60])
    assert len(plan) == 10


def test_twelve_date_toy_calendar_with_gap():
    gone = {dt.date(2012, 4, 4), dt.date(2012, 4, 5)}
    dates = [d for d in daily(14) if d not in gone]
    ds = toy_dataset(dates, n_stations=1)
    assert len(ds.unique_dates) == 12
    plan = window_plan(ds, 4, dt.date(2012, 4, 7))
    expected = {
        dt.date(2012, 4, 7): (dt.date(2012, 4, 1), dt.date(2012, 4, 2), dt.date(2012, 4, 3), dt.date(2012, 4, 6)),
        dt.date(2012, 4, 8): (dt.date(2012, 4, 2), dt.date(2012, 4, 3), dt.date(2012, 4, 6), dt.date(2012, 4, 7)),
    }
    got = dict(plan)
    for t, w in expected.items():
        assert got[t] == w
    assert all(len(w) == 4 for _, w in plan)


def test_study_calendar_length_35_from_may_7_targets_323_days():
    ds = toy_dataset(study_calendar(), n_stations=1)
    assert len(window_plan(ds, 35, dt.date(2012, 5, 7))) == 323
