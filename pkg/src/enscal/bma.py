"""Bayesian model averaging over exchangeable member groups.

The predictive density for a case with members ``f_j`` is a mixture with one
component per member; every member in group ``k`` carries the same weight
``w_k`` and the same component parameters, so ``sum_k M_k * w_k == 1``.

Three component families are supported:

* normal with mean ``b0_k + b1_k * f`` and common ``sigma`` (bias by OLS,
  weights and ``sigma`` by EM, or by minimum CRPS),
* gamma with mean ``b0 + b1 * f`` shared by all members (OLS) and standard
  deviation ``c0 + c1 * f`` (EM with a numerical M-step),
* zero-truncated normal with location ``b0_k + b1_k * f`` and common scale,
  every parameter from one likelihood ascent (EM with a numerical M-step).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .data import ForecastCase, GroupingScheme
from .distributions import (
    LOG_SQRT_2PI,
    GammaMeanSd,
    Mixture,
    Normal,
    TruncNormal,
    crps_normal_mixture,
)
from .errors import DataError, DegeneracyError, FitError, ShapeError
from .optimize import ObjectiveSpec, minimize

log = logging.getLogger(__name__)

BIAS_MODES = ("linear", "additive", "none")
WEIGHT_FLOOR = 1e-6
SIGMA2_FLOOR = 1e-8
GAMMA_OBS_FLOOR = 0.1
GAMMA_MEAN_FLOOR = 1e-3

MixturePredictive = Mixture


@dataclass(frozen=True)
class FitDiagnostics:
    iterations: int = 0
    converged: bool = True
    loglik: tuple = field(default=(), repr=False)
    flags: tuple = ()

    @property
    def final_loglik(self) -> float:
        return self.loglik[-1] if self.loglik else math.nan


@dataclass(frozen=True)
class BiasCorrection:
    mode: str
    beta0: tuple
    beta1: tuple
    fallback_groups: tuple = ()

    def __post_init__(self):
        if self.mode not in BIAS_MODES:
            raise ValueError(f"unknown bias mode {self.mode!r}")
        b0 = tuple(float(v) for v in self.beta0)
        b1 = tuple(float(v) for v in self.beta1)
        if len(b0) != len(b1):
            raise ValueError("beta0 and beta1 need one entry per group")
        if not all(math.isfinite(v) for v in b0 + b1):
            raise ValueError("bias coefficients must be finite")
        if self.mode != "linear" and any(v != 1.0 for v in b1):
            raise ValueError(f"{self.mode} bias correction fixes beta1 = 1")
        if self.mode == "none" and any(v != 0.0 for v in b0):
            raise ValueError("no bias correction fixes beta0 = 0")
        object.__setattr__(self, "beta0", b0)
        object.__setattr__(self, "beta1", b1)

    @classmethod
    def identity(cls, m: int) -> "BiasCorrection":
        return cls("none", (0.0,) * m, (1.0,) * m)

    def apply(self, members, grouping: GroupingScheme) -> np.ndarray:
        lab = grouping.member_group
        return np.asarray(self.beta0)[lab] + np.asarray(self.beta1)[lab] * members


def _group_weights_to_members(weights, grouping: GroupingScheme) -> np.ndarray:
    return np.asarray(weights, dtype=float)[grouping.member_group]


def _check_weights(weights, grouping):
    w = np.asarray(weights, dtype=float)
    if w.shape != (grouping.m,) or np.any(w < 0):
        raise ValueError("need one nonnegative weight per group")
    if abs(float(np.dot(grouping.sizes, w)) - 1.0) > 1e-12:
        raise ValueError("group weights must satisfy sum_k M_k w_k = 1")


@dataclass(frozen=True)
class BmaNormalModel:
    grouping: GroupingScheme
    bias: BiasCorrection
    weights: tuple
    sigma: float
    estimator: str = "ml"
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics, compare=False, repr=False)

    def __post_init__(self):
        _check_weights(self.weights, self.grouping)
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    kind = "bma_normal"


@dataclass(frozen=True)
class BmaGammaModel:
    grouping: GroupingScheme
    b0: float
    b1: float
    c0: float
    c1: float
    weights: tuple
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics, compare=False, repr=False)

    def __post_init__(self):
        _check_weights(self.weights, self.grouping)

    kind = "bma_gamma"


@dataclass(frozen=True)
class BmaTruncNormalModel:
    grouping: GroupingScheme
    beta0: tuple
    beta1: tuple
    sigma: float
    weights: tuple
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics, compare=False, repr=False)

    def __post_init__(self):
        _check_weights(self.weights, self.grouping)
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    kind = "bma_truncnormal"


# -- training data helpers -----------------------------------------------------

def _training(window, grouping: GroupingScheme, min_cases: int = 2):
    X = grouping.canonical(np.asarray(window.members, dtype=float))
    y = np.asarray(window.obs, dtype=float)
    keep = ~np.isnan(y)
    X, y = X[keep], y[keep]
    if len(y) < min_cases:
        raise DataError(f"training window has {len(y)} usable cases, need at least {min_cases}")
    return X, y


def _ols(x, y):
    xm, ym = x.mean(), y.mean()
    sxx = np.dot(x - xm, x - xm)
    if not sxx > 1e-12 * max(1.0, xm * xm) * x.size:
        return None
    b1 = np.dot(x - xm, y - ym) / sxx
    return ym - b1 * xm, b1


def fit_bias_regression(window, grouping: GroupingScheme, mode: str = "linear") -> BiasCorrection:
    """Per-group regression of the observation on that group's member values."""
    if mode not in BIAS_MODES:
        raise ValueError(f"unknown bias mode {mode!r}")
    if mode == "none":
        return BiasCorrection.identity(grouping.m)
    X, y = _training(window, grouping, min_cases=1)
    b0, b1, fallback = [], [], []
    for k in range(grouping.m):
        cols = grouping.columns(k)
        x = X[:, cols].ravel()
        yy = np.repeat(y, len(cols))
        fit = _ols(x, yy) if mode == "linear" else None
        if fit is None:
            if mode == "linear":
                fallback.append(k)
                log.info("group %d has no member spread, using additive bias", k + 1)
            b0.append(float(np.mean(yy - x)))
            b1.append(1.0)
        else:
            b0.append(float(fit[0]))
            b1.append(float(fit[1]))
    if fallback:
        # a mixed fit is stored as linear with beta1 = 1 on the fallback groups
        return BiasCorrection("linear", b0, b1, tuple(fallback))
    return BiasCorrection(mode, b0, b1)


# -- E-step machinery ----------------------------------------------------------

def _e_step(log_comp):
    """Responsibilities and per-case log-likelihood from component log-densities."""
    ll = logsumexp(log_comp, axis=1)
    resp = np.exp(log_comp - ll[:, None])
    return resp, ll


def _update_weights(resp, grouping: GroupingScheme, flags: list):
    n = resp.shape[0]
    mass = np.array([resp[:, grouping.columns(k)].sum() for k in range(grouping.m)])
    w = mass / (n * np.asarray(grouping.sizes))
    if np.any(mass <= 0):
        w = np.maximum(w, WEIGHT_FLOOR)
        flags.append("weight_floor")
    w = w / np.dot(grouping.sizes, w)
    return w


def _init_weights(grouping):
    return np.full(grouping.m, 1.0 / grouping.n_members)


def _finish_flags(flags):
    seen = []
    for f in flags:
        if f not in seen:
            seen.append(f)
    return tuple(seen)


# -- normal BMA ----------------------------------------------------------------

def fit_bma_normal_em(
    window,
    grouping: GroupingScheme,
    bias: BiasCorrection | str = "linear",
    init: BmaNormalModel | None = None,
    tol: float = 1e-8,
    max_iter: int = 5000,
) -> BmaNormalModel:
    """Weights and common variance of the normal mixture by EM.

    ``bias`` is either a fitted :class:`BiasCorrection` (kept fixed) or a
    mode name, in which case it is first fitted by regression.  Iteration
    stops when the mean per-case log-likelihood gains less than ``tol``.
    """
    X, y = _training(window, grouping)
    if isinstance(bias, str):
        bias = fit_bias_regression(window, grouping, bias)
    resid = y[:, None] - bias.apply(X, grouping)
    sq = resid * resid
    n, M = X.shape
    if init is not None:
        w, s2 = np.asarray(init.weights, dtype=float), init.sigma**2
    else:
        w, s2 = _init_weights(grouping), max(float(np.mean(sq)), SIGMA2_FLOOR)
    flags = ["bias_fallback"] if bias.fallback_groups else []
    history = []
    converged = False
    it = 0
    while True:
        log_comp = (np.log(_group_weights_to_members(w, grouping))
                    - 0.5 * sq / s2 - 0.5 * math.log(s2) - LOG_SQRT_2PI)
        resp, ll = _e_step(log_comp)
        history.append(float(ll.mean()))
        if len(history) > 1 and history[-1] - history[-2] < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        w = _update_weights(resp, grouping, flags)
        s2 = float(np.sum(resp * sq)) / n
        if s2 < SIGMA2_FLOOR:
            s2 = SIGMA2_FLOOR
            flags.append("sigma_floor")
    diag = FitDiagnostics(it, converged, tuple(history), _finish_flags(flags))
    return BmaNormalModel(grouping, bias, tuple(float(v) for v in w), math.sqrt(s2), "ml", diag)


def bma_normal_loglik(model: BmaNormalModel, window) -> float:
    """Mean per-case log-likelihood of ``model`` on a training window."""
    X, y = _training(window, model.grouping, min_cases=1)
    mu = model.bias.apply(X, model.grouping)
    s = model.sigma
    log_comp = (np.log(_group_weights_to_members(model.weights, model.grouping))
                - 0.5 * ((y[:, None] - mu) / s) ** 2 - math.log(s) - LOG_SQRT_2PI)
    return float(logsumexp(log_comp, axis=1).mean())


def _weights_from_free(v, grouping):
    v2 = np.asarray(v, dtype=float)
    total = np.dot(grouping.sizes, v2)
    return v2 / total


def fit_bma_normal_crps(
    window,
    grouping: GroupingScheme,
    bias: BiasCorrection | str = "linear",
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> BmaNormalModel:
    """Weights and common sigma of the normal mixture by minimum mean CRPS.

    The bias correction is fitted (or supplied) exactly as for the EM
    estimator; only the weights and the spread come from the score.
    """
    X, y = _training(window, grouping)
    if isinstance(bias, str):
        bias = fit_bias_regression(window, grouping, bias)
    mu = bias.apply(X, grouping)
    m = grouping.m
    s0 = math.sqrt(max(float(np.mean((y[:, None] - mu) ** 2)), SIGMA2_FLOOR))

    def objective(theta):
        w = _weights_from_free(theta[:m], grouping)
        if not np.all(np.isfinite(w)):
            return math.inf
        sigma = theta[m]
        if not sigma > 0:
            return math.inf
        return float(np.mean(crps_normal_mixture(_group_weights_to_members(w, grouping), mu, sigma, y)))

    # squared free weights are normalised inside the objective
    start = np.concatenate([np.ones(m), [s0]])
    spec = ObjectiveSpec.from_constrained(objective, start, ["square"] * (m + 1))
    res = minimize(spec, tol=tol, max_iter=max_iter)
    w = _weights_from_free(res.argmin[:m], grouping)
    sigma = float(res.argmin[m])
    if not sigma > 0:
        raise FitError("minimum-CRPS fit collapsed the BMA spread to zero")
    diag = FitDiagnostics(res.iterations, res.converged, (res.initial_value, res.value),
                          ("bias_fallback",) if bias.fallback_groups else ())
    return BmaNormalModel(grouping, bias, tuple(float(v) for v in w), sigma, "crps", diag)


# -- gamma BMA -----------------------------------------------------------------

def _gamma_logpdf(y, mean, sd):
    k = (mean / sd) ** 2
    th = sd * sd / mean
    return (k - 1.0) * np.log(y) - y / th - special.gammaln(k) - k * np.log(th)


def fit_bma_gamma(
    window,
    grouping: GroupingScheme,
    init: BmaGammaModel | None = None,
    tol: float = 1e-6,
    max_iter: int = 2000,
    mstep_iter: int = 60,
) -> BmaGammaModel:
    """Gamma mixture with a mean regression shared by all members.

    ``b0, b1`` come from OLS pooled over every (member, observation) pair;
    the weights and the standard-deviation line ``c0 + c1 f`` from EM, whose
    M-step for ``c0, c1`` runs the simplex on the expected complete-data
    log-likelihood.  The likelihood sees observations below 0.1 as 0.1; the
    regression uses them unchanged.
    """
    X, y_raw = _training(window, grouping)
    flags = []
    y = np.maximum(y_raw, GAMMA_OBS_FLOOR)
    if np.any(y_raw < GAMMA_OBS_FLOOR):
        flags.append("obs_clamped")
    fit = _ols(X.ravel(), np.repeat(y_raw, X.shape[1]))
    if fit is None:
        flags.append("bias_fallback")
        b0, b1 = float(np.mean(y_raw[:, None] - X)), 1.0
    else:
        b0, b1 = float(fit[0]), float(fit[1])
    mean = b0 + b1 * X
    if mean.min() <= 0:
        b0 += GAMMA_MEAN_FLOOR - float(mean.min())
        mean = b0 + b1 * X
        flags.append("mean_shift")
    n = len(y)
    if init is not None:
        w = np.asarray(init.weights, dtype=float)
        c = np.array([init.c0, init.c1])
    else:
        w = _init_weights(grouping)
        sd = math.sqrt(float(np.mean((y_raw[:, None] - mean) ** 2)))
        c = np.array([0.5 * sd, 0.5 * sd / max(float(np.mean(np.abs(X))), 1e-6)])

    def comp_logpdf(cc):
        sd = cc[0] + cc[1] * X
        if np.any(sd <= 0):
            return None
        return _gamma_logpdf(y[:, None], mean, sd)

    lp = comp_logpdf(c)
    if lp is None or not np.all(np.isfinite(lp)):
        raise FitError("initial gamma BMA parameters give a degenerate likelihood")
    history = []
    converged = False
    it = 0
    while True:
        resp, ll = _e_step(np.log(_group_weights_to_members(w, grouping)) + lp)
        history.append(float(ll.mean()))
        if len(history) > 1 and history[-1] - history[-2] < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        w = _update_weights(resp, grouping, flags)

        def neg_q(cc):
            v = comp_logpdf(cc)
            if v is None:
                return math.inf
            return -float(np.sum(resp * v)) / n

        spec = ObjectiveSpec.from_constrained(neg_q, c, ["square", "square"])
        c = minimize(spec, tol=1e-10, max_iter=mstep_iter, multistart=False).argmin
        lp = comp_logpdf(c)
    diag = FitDiagnostics(it, converged, tuple(history), _finish_flags(flags))
    return BmaGammaModel(grouping, b0, b1, float(c[0]), float(c[1]), tuple(float(v) for v in w), diag)


# -- truncated normal BMA ------------------------------------------------------

def _tn_logpdf(y, mu, sigma):
    alpha = mu / sigma
    log_mass = special.log_ndtr(alpha)
    if np.any(log_mass < math.log(1e-300)):
        return None
    z = (y - mu) / sigma
    return -0.5 * z * z - LOG_SQRT_2PI - math.log(sigma) - log_mass


def fit_bma_truncnormal_ml(
    window,
    grouping: GroupingScheme,
    init: BmaTruncNormalModel | None = None,
    tol: float = 1e-6,
    max_iter: int = 2000,
    mstep_iter: int = 60,
) -> BmaTruncNormalModel:
    """Zero-truncated normal mixture with every parameter by maximum likelihood.

    EM: responsibilities give the weights in closed form; locations and the
    common scale maximise the expected complete-data log-likelihood with the
    simplex.  Parameter points where some component keeps almost no mass
    above zero are rejected.
    """
    X, y = _training(window, grouping)
    if np.any(y < 0):
        raise DataError("truncated normal BMA needs nonnegative observations")
    m = grouping.m
    lab = grouping.member_group
    if init is not None:
        b0, b1 = np.asarray(init.beta0, float), np.asarray(init.beta1, float)
        sigma, w = init.sigma, np.asarray(init.weights, float)
    else:
        start_bias = fit_bias_regression(window, grouping, "linear")
        b0, b1 = np.asarray(start_bias.beta0), np.asarray(start_bias.beta1)
        resid = y[:, None] - (b0[lab] + b1[lab] * X)
        sigma = math.sqrt(max(float(np.mean(resid**2)), SIGMA2_FLOOR))
        w = _init_weights(grouping)
    n = len(y)
    flags = []

    def comp_logpdf(theta):
        s = theta[2 * m]
        if not s > 0:
            return None
        bb0, bb1 = theta[0:2 * m:2], theta[1:2 * m:2]
        return _tn_logpdf(y[:, None], bb0[lab] + bb1[lab] * X, s)

    theta = np.empty(2 * m + 1)
    theta[0:2 * m:2], theta[1:2 * m:2], theta[2 * m] = b0, b1, sigma
    lp = comp_logpdf(theta)
    if lp is None:
        raise DegeneracyError("initial truncated normal BMA components have no mass above zero")
    transforms = ["identity"] * (2 * m) + ["square"]
    history = []
    converged = False
    it = 0
    while True:
        resp, ll = _e_step(np.log(_group_weights_to_members(w, grouping)) + lp)
        history.append(float(ll.mean()))
        if len(history) > 1 and history[-1] - history[-2] < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        w = _update_weights(resp, grouping, flags)

        def neg_q(th):
            v = comp_logpdf(th)
            if v is None:
                return math.inf
            return -float(np.sum(resp * v)) / n

        spec = ObjectiveSpec.from_constrained(neg_q, theta, transforms)
        theta = minimize(spec, tol=1e-10, max_iter=mstep_iter, multistart=False).argmin
        lp = comp_logpdf(theta)
    diag = FitDiagnostics(it, converged, tuple(history), _finish_flags(flags))
    return BmaTruncNormalModel(
        grouping,
        tuple(float(v) for v in theta[0:2 * m:2]),
        tuple(float(v) for v in theta[1:2 * m:2]),
        float(theta[2 * m]),
        tuple(float(v) for v in w),
        diag,
    )


# -- prediction ----------------------------------------------------------------

def _case_members(case, grouping):
    f = case.member_array() if isinstance(case, ForecastCase) else np.asarray(case, dtype=float)
    if f.ndim != 1 or f.size != grouping.n_members:
        raise ShapeError(f"case has {f.size} members but the model expects {grouping.n_members}")
    return grouping.canonical(f)


def predict_bma(model, case) -> Mixture:
    """Predictive mixture for one case (a ForecastCase or a member vector)."""
    g = model.grouping
    f = _case_members(case, g)
    lab = g.member_group
    w = _group_weights_to_members(model.weights, g)
    if isinstance(model, BmaNormalModel):
        return Mixture(w, Normal(model.bias.apply(f, g), model.sigma))
    if isinstance(model, BmaTruncNormalModel):
        mu = np.asarray(model.beta0)[lab] + np.asarray(model.beta1)[lab] * f
        return Mixture(w, TruncNormal(mu, model.sigma))
    if isinstance(model, BmaGammaModel):
        mean = np.maximum(model.b0 + model.b1 * f, GAMMA_MEAN_FLOOR)
        sd = np.maximum(model.c0 + model.c1 * f, GAMMA_MEAN_FLOOR)
        return Mixture(w, GammaMeanSd(mean, sd))
    raise TypeError(f"not a BMA model: {type(model).__name__}")


def mixture_cdf(mp: Mixture, x):
    return mp.cdf(x)


def mixture_quantile(mp: Mixture, p):
    return mp.quantile(p)


def mixture_crps(mp: Mixture, x):
    return mp.crps(x)


def with_weights(model, weights):
    """Copy of ``model`` with new group weights (used by tests and synth)."""
    return replace(model, weights=tuple(weights))
