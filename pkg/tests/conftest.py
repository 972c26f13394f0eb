import datetime as dt

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "enscal", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("enscal")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_window():
    """A hand-sized training window over a two-group, 3-member ensemble."""
    from enscal.data import Dataset, make_window

    r = np.random.default_rng(3)
    dates = [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(30) for _ in range(4)]
    stations = [f"S{j}" for _ in range(30) for j in range(4)]
    center = 10 + 3 * r.standard_normal(len(dates))
    X = center[:, None] + r.standard_normal((len(dates), 3))
    y = center + 0.8 * r.standard_normal(len(dates))
    ds = Dataset(dates, stations, X, y)
    return make_window(ds, dt.date(2020, 2, 1), ds.unique_dates)


def window_of(ds):
    """Every case of ``ds`` as one training window for the day after its last date."""
    from enscal.data import make_window

    return make_window(ds, ds.unique_dates[-1] + dt.timedelta(days=1), ds.unique_dates)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
