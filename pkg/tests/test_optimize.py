import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize as sciopt

from enscal.errors import SetupError
from enscal.optimize import ObjectiveSpec, minimize, nelder_mead, to_constrained, to_unconstrained


def rosen(x):
    return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2


def test_rosenbrock_agrees_with_scipy_simplex():
    ours = minimize(ObjectiveSpec(rosen, [-1.2, 1.0]))
    ref = sciopt.minimize(rosen, [-1.2, 1.0], method="Nelder-Mead",
                          options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
    np.testing.assert_allclose(ours.argmin, ref.x, atol=1e-5)
    np.testing.assert_allclose(ours.argmin, [1.0, 1.0], atol=1e-6)
    assert ours.converged


def test_quadratic_with_square_transform_hits_boundary():
    # minimum of (x + 1)^2 over x >= 0 is at 0
    res = minimize(ObjectiveSpec.from_constrained(lambda x: (x[0] + 1.0) ** 2, [2.0], ["square"]))
    assert res.argmin[0] >= 0
    assert res.argmin[0] == pytest.approx(0.0, abs=1e-4)


def test_logistic_transform_keeps_unit_interval():
    res = minimize(ObjectiveSpec.from_constrained(lambda x: (x[0] - 0.3) ** 2, [0.8], ["logistic"]))
    assert 0 < res.argmin[0] < 1
    assert res.argmin[0] == pytest.approx(0.3, abs=1e-5)


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=5))
def test_transforms_round_trip(u):
    u = np.asarray(u)
    for t in ("identity", "logistic"):
        tr = [t] * u.size
        if t == "logistic":
            u = np.clip(u, -15, 15)
        np.testing.assert_allclose(to_unconstrained(to_constrained(u, tr), tr), u, rtol=1e-8, atol=1e-8)
    tr = ["square"] * u.size
    np.testing.assert_allclose(to_unconstrained(to_constrained(u, tr), tr), np.abs(u), rtol=1e-12, atol=1e-150)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4))
def test_never_worse_than_start(x0):
    def f(x):
        return float(np.sum(np.sin(3 * x) + 0.1 * x * x))

    res = minimize(ObjectiveSpec(f, x0))
    assert res.value <= f(np.asarray(x0)) + 1e-15
    assert res.initial_value == pytest.approx(f(np.asarray(x0)))


def test_nonfinite_regions_are_avoided():
    def f(x):
        return math.inf if x[0] < 0 else (x[0] - 1.0) ** 2

    res = minimize(ObjectiveSpec(f, [3.0]))
    assert res.argmin[0] == pytest.approx(1.0, abs=1e-5)


def test_nonfinite_start_is_a_setup_error():
    with pytest.raises(SetupError):
        minimize(ObjectiveSpec(lambda x: math.nan, [1.0]))


def test_bad_transform_and_domain_rejected():
    with pytest.raises(SetupError):
        ObjectiveSpec(rosen, [0.0, 0.0], ["identity", "cube"])
    with pytest.raises(SetupError):
        ObjectiveSpec.from_constrained(rosen, [-1.0, 0.0], ["square", "identity"])


def test_history_is_monotone():
    u, val, it, conv, hist = nelder_mead(rosen, np.array([-1.2, 1.0]))
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] == val


def test_quadratic_bowl():
    res = minimize(ObjectiveSpec(lambda x: (x[0] - 3.0) ** 2, [0.0]))
    assert res.argmin[0] == pytest.approx(3.0, abs=1e-6)


def test_square_transform_reaches_origin():
    res = minimize(ObjectiveSpec.from_constrained(lambda x: x[0] ** 2 + x[1] ** 2, [1.0, 1.0], ["square"] * 2))
    np.testing.assert_allclose(res.argmin, [0.0, 0.0], atol=1e-6)


def test_rosenbrock_within_5000_iterations():
    res = minimize(ObjectiveSpec(rosen, [-1.2, 1.0]), max_iter=5000)
    np.testing.assert_allclose(res.argmin, [1.0, 1.0], atol=1e-4)
