"""Predictive distributions: normal, zero-truncated normal, gamma, finite mixtures.

Every distribution broadcasts its parameters against the evaluation point, so a
single object can stand for a whole vector of forecast cases or of mixture
components.  Standard normal primitives come from :mod:`scipy.special`
(``ndtr``/``log_ndtr``/``ndtri``), which are accurate to a few ulp.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize, special

from .errors import DegeneracyError, DomainError, QuadratureError

SQRT_PI = math.sqrt(math.pi)
SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_TINY_MASS = 1e-300


def norm_pdf(z):
    return np.exp(-0.5 * np.square(z) - LOG_SQRT_2PI)


norm_cdf = special.ndtr
norm_ppf = special.ndtri


def _finite_x(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("evaluation point must be finite")
    return x


def _prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise DomainError("probability must lie strictly inside (0, 1)")
    return p


def _positive(name, v):
    v = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise DomainError(f"{name} must be finite and > 0")
    return v


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


class Distribution:
    lower = -math.inf
    continuous = True

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        """Left limit F(x-); equal to ``cdf`` for continuous laws."""
        return self.cdf(x)

    def quantile(self, p):
        raise NotImplementedError

    def median(self):
        return self.quantile(0.5)

    def crps(self, x):
        return crps_quadrature(self.cdf, x, quantile=self.quantile, lower=self.lower)


class Normal(Distribution):
    def __init__(self, mu, sigma):
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = _positive("sigma", sigma)
        if not np.all(np.isfinite(self.mu)):
            raise DomainError("mu must be finite")

    def __repr__(self):
        return f"Normal(mu={_scalar(self.mu)!r}, sigma={_scalar(self.sigma)!r})"

    def pdf(self, x):
        x = _finite_x(x)
        return _scalar(norm_pdf((x - self.mu) / self.sigma) / self.sigma)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return _scalar(-0.5 * z * z - LOG_SQRT_2PI - np.log(self.sigma))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar(norm_cdf((x - self.mu) / self.sigma))

    def quantile(self, p):
        p = _prob(p)
        return _scalar(self.mu + self.sigma * norm_ppf(p))

    def mean(self):
        return _scalar(self.mu + 0.0 * self.sigma)

    def crps(self, x):
        return _scalar(crps_normal(self.mu, self.sigma, _finite_x(x)))


class TruncNormal(Distribution):
    """Normal(mu, sigma) restricted to ``[0, inf)`` and renormalised."""

    lower = 0.0

    def __init__(self, mu, sigma):
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = _positive("sigma", sigma)
        if not np.all(np.isfinite(self.mu)):
            raise DomainError("mu must be finite")
        self.alpha = self.mu / self.sigma
        self.log_mass = special.log_ndtr(self.alpha)
        if np.any(self.log_mass < math.log(_TINY_MASS)):
            raise DegeneracyError(
                "truncated normal keeps less than 1e-300 of its mass above zero"
            )

    def __repr__(self):
        return f"TruncNormal(mu={_scalar(self.mu)!r}, sigma={_scalar(self.sigma)!r})"

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mu) / self.sigma
        out = -0.5 * z * z - LOG_SQRT_2PI - np.log(self.sigma) - self.log_mass
        return _scalar(np.where(x < 0, -np.inf, out))

    def pdf(self, x):
        x = _finite_x(x)
        return _scalar(np.exp(self.logpdf(x)))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        z = (self.mu - np.maximum(x, 0.0)) / self.sigma
        return np.exp(special.log_ndtr(z) - self.log_mass)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (self.mu - np.maximum(x, 0.0)) / self.sigma
        out = -np.expm1(special.log_ndtr(z) - self.log_mass)
        return _scalar(np.where(x < 0, 0.0, np.clip(out, 0.0, 1.0)))

    def quantile(self, p):
        p = _prob(p)
        # survival form keeps precision when little mass is above zero
        q = self.mu - self.sigma * special.ndtri_exp(np.log1p(-p) + self.log_mass)
        q = np.maximum(q, 0.0)
        if np.ndim(q) == 0:
            return _polish_quantile(self.cdf, float(q), float(p), 0.0)
        return q

    def mean(self):
        return _scalar(
            self.mu + self.sigma * np.exp(-0.5 * self.alpha**2 - LOG_SQRT_2PI - self.log_mass)
        )

    def crps(self, x):
        return _scalar(crps_truncnormal(self.mu, self.sigma, _finite_x(x)))


class GammaMeanSd(Distribution):
    """Gamma law parameterised by mean and standard deviation."""

    lower = 0.0

    def __init__(self, mean, sd):
        self.mean_ = _positive("mean", mean)
        self.sd = _positive("sd", sd)

    def __repr__(self):
        return f"GammaMeanSd(mean={_scalar(self.mean_)!r}, sd={_scalar(self.sd)!r})"

    @property
    def shape(self):
        return _scalar(self.mean_**2 / self.sd**2)

    @property
    def scale(self):
        return _scalar(self.sd**2 / self.mean_)

    @classmethod
    def from_shape_scale(cls, shape, scale):
        shape = _positive("shape", shape)
        scale = _positive("scale", scale)
        return cls(shape * scale, np.sqrt(shape) * scale)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k, th = self.mean_**2 / self.sd**2, self.sd**2 / self.mean_
        with np.errstate(divide="ignore", invalid="ignore"):
            out = special.xlogy(k - 1.0, x) - x / th - special.gammaln(k) - k * np.log(th)
        return _scalar(np.where(x < 0, -np.inf, out))

    def pdf(self, x):
        x = _finite_x(x)
        return _scalar(np.exp(self.logpdf(x)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        k, th = self.mean_**2 / self.sd**2, self.sd**2 / self.mean_
        return _scalar(special.gammainc(k, np.maximum(x, 0.0) / th))

    def quantile(self, p):
        p = _prob(p)
        k, th = self.mean_**2 / self.sd**2, self.sd**2 / self.mean_
        q = special.gammaincinv(k, p) * th
        if np.ndim(q) == 0:
            return _polish_quantile(self.cdf, float(q), float(p), 0.0)
        return q

    def mean(self):
        return _scalar(self.mean_ + 0.0 * self.sd)


class Empirical(Distribution):
    """Empirical law of an ensemble (equal mass on each member)."""

    continuous = False

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=float).reshape(-1))
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise DomainError("empirical distribution needs finite values")
        self.values = v
        self.lower = float(v[0])

    def pdf(self, x):
        raise DomainError("empirical distribution has no density")

    def cdf(self, x):
        return _scalar(np.searchsorted(self.values, np.asarray(x, dtype=float), side="right") / self.values.size)

    def cdf_left(self, x):
        return _scalar(np.searchsorted(self.values, np.asarray(x, dtype=float), side="left") / self.values.size)

    def quantile(self, p):
        p = _prob(p)
        idx = np.ceil(p * self.values.size).astype(int) - 1
        return _scalar(self.values[np.clip(idx, 0, self.values.size - 1)])

    def median(self):
        return float(np.median(self.values))

    def mean(self):
        return float(np.mean(self.values))

    def crps(self, x):
        from .verification import crps_ensemble

        return crps_ensemble(self.values, float(x))


def PointMass(c) -> Empirical:
    return Empirical([c])


class Mixture(Distribution):
    """Finite mixture; ``components`` is one vectorised distribution with a
    trailing parameter axis of length ``len(weights)``."""

    def __init__(self, weights, components: Distribution):
        w = np.asarray(weights, dtype=float).reshape(-1)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("mixture weights must be nonnegative and sum to 1")
        self.weights = w
        self.components = components
        self.lower = components.lower

    def __len__(self):
        return self.weights.size

    def component(self, j: int) -> Distribution:
        c = self.components
        if isinstance(c, GammaMeanSd):
            return GammaMeanSd(np.broadcast_to(c.mean_, self.weights.shape)[j],
                               np.broadcast_to(c.sd, self.weights.shape)[j])
        return type(c)(np.broadcast_to(c.mu, self.weights.shape)[j],
                       np.broadcast_to(c.sigma, self.weights.shape)[j])

    def _at(self, fn, x):
        x = np.asarray(x, dtype=float)
        return _scalar(fn(x[..., None]) @ self.weights)

    def pdf(self, x):
        return self._at(self.components.pdf, _finite_x(x))

    def cdf(self, x):
        return self._at(self.components.cdf, x)

    def quantile(self, p):
        p = _prob(p)
        if len(self) == 1:
            return self.component(0).quantile(p)
        if np.ndim(p):
            return np.array([self.quantile(float(v)) for v in p.reshape(-1)]).reshape(p.shape)
        p = float(p)
        qs = np.asarray(self.components.quantile(np.full(self.weights.shape, p)), dtype=float)
        lo, hi = float(qs.min()), float(qs.max())
        if hi - lo <= 1e-14 * max(1.0, abs(hi)):
            return hi
        return optimize.brentq(lambda t: self.cdf(t) - p, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)

    def mean(self):
        return float(np.broadcast_to(self.components.mean(), self.weights.shape) @ self.weights)

    def crps(self, x):
        if len(self) == 1:
            return self.component(0).crps(x)
        x = float(_finite_x(x))
        if isinstance(self.components, Normal):
            return float(crps_normal_mixture(self.weights, self.components.mu, self.components.sigma, x))
        return crps_quadrature(self.cdf, x, quantile=self.quantile, lower=self.lower)


# -- generic functional surface ------------------------------------------------

def pdf(d: Distribution, x):
    return d.pdf(x)


def cdf(d: Distribution, x):
    return d.cdf(x)


def quantile(d: Distribution, p):
    return d.quantile(p)


def crps_closed(d: Distribution, x):
    if not isinstance(d, (Normal, TruncNormal)):
        raise TypeError("closed-form CRPS is available for Normal and TruncNormal only")
    return d.crps(x)


def _polish_quantile(F, q: float, p: float, lower: float) -> float:
    if abs(F(q) - p) <= 1e-12:
        return q
    step = max(1e-8, 1e-6 * abs(q))
    lo, hi = q, q
    for _ in range(200):
        lo = max(lower, lo - step)
        hi = hi + step
        if F(lo) <= p <= F(hi):
            break
        step *= 2
    return optimize.brentq(lambda t: F(t) - p, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


# -- closed-form CRPS ----------------------------------------------------------

def crps_normal(mu, sigma, x):
    """CRPS of N(mu, sigma^2) at ``x``; broadcasts."""
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / SQRT_PI)


def crps_truncnormal(mu, sigma, x):
    """CRPS of the zero-truncated normal with location ``mu``, scale ``sigma``.

    Observations below zero add their distance to the cutoff.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    x = np.asarray(x, dtype=float)
    xc = np.maximum(x, 0.0)
    alpha = mu / sigma
    log_mass = special.log_ndtr(alpha)
    if np.any(log_mass < math.log(_TINY_MASS)):
        raise DegeneracyError("truncated normal keeps less than 1e-300 of its mass above zero")
    z = (xc - mu) / sigma
    # each term divided by the retained mass in log space; P**2 underflows
    # long before the truncated law itself degenerates
    tail_ratio = np.exp(special.log_ndtr(-z) - log_mass)
    dens_ratio = np.exp(-0.5 * z * z - LOG_SQRT_2PI - log_mass)
    pair_ratio = np.exp(special.log_ndtr(SQRT2 * alpha) - 2.0 * log_mass)
    core = z * (1.0 - 2.0 * tail_ratio) + 2.0 * dens_ratio - pair_ratio / SQRT_PI
    return sigma * core + (xc - x)


def _abs_moment(m, s):
    """E|Y| for Y ~ N(m, s^2)."""
    r = m / s
    return m * (2.0 * norm_cdf(r) - 1.0) + 2.0 * s * norm_pdf(r)


def crps_normal_mixture(weights, mu, sigma, x):
    """CRPS of a normal mixture through E|X - x| - E|X - X'| / 2.

    ``mu``/``sigma`` have a trailing component axis; leading axes index cases.
    """
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
    x = np.asarray(x, dtype=float)
    w = np.broadcast_to(w, mu.shape)
    first = np.sum(w * _abs_moment(mu - x[..., None], sigma), axis=-1)
    dm = mu[..., :, None] - mu[..., None, :]
    ds = np.sqrt(sigma[..., :, None] ** 2 + sigma[..., None, :] ** 2)
    ww = w[..., :, None] * w[..., None, :]
    second = np.sum(ww * _abs_moment(dm, ds), axis=(-2, -1))
    return first - 0.5 * second


# -- quadrature oracle ---------------------------------------------------------

def _bracket(cdf, x, quantile, lower, eps=1e-13):
    if quantile is not None:
        try:
            lo = float(quantile(eps))
            hi = float(quantile(1.0 - 1e-12))
        except (DomainError, ValueError):
            lo, hi = x - 1.0, x + 1.0
    else:
        lo, hi = x - 1.0, x + 1.0
    width = max(1.0, hi - lo)
    for _ in range(200):
        if lo <= lower or cdf(lo) <= eps:
            break
        lo -= width
        width *= 2
    width = max(1.0, hi - lo)
    for _ in range(200):
        if 1.0 - cdf(hi) <= eps:
            break
        hi += width
        width *= 2
    else:
        raise QuadratureError("could not locate the upper end of the support")
    return max(lo, lower), hi


def crps_quadrature(cdf, x, quantile=None, lower=-math.inf, breakpoints=(), tol=1e-10, limit=500):
    """CRPS by adaptive quadrature of the defining integral.

    Integrates F(y)^2 below the observation and (1 - F(y))^2 above it over an
    effective support located from ``quantile`` (or by expansion from ``x``).
    ``breakpoints`` lists known discontinuities of ``cdf``.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("observation must be finite")
    lo, hi = _bracket(cdf, x, quantile, lower)
    bps = sorted(float(b) for b in breakpoints)
    if bps:
        lo, hi = min(lo, bps[0]), max(hi, bps[-1])
    a, b = min(lo, x), max(hi, x)
    total = 0.0
    err_total = 0.0
    for left, right, fn in ((a, x, lambda t: cdf(t) ** 2), (x, b, lambda t: (1.0 - cdf(t)) ** 2)):
        if right <= left:
            continue
        pts = [p for p in bps if left < p < right]
        val, err, info = _quad(fn, left, right, pts, tol, limit)
        total += val
        err_total += err
    if err_total > 100 * tol:
        raise QuadratureError(
            f"quadrature did not reach tolerance {tol:g} (estimated error {err_total:.3g})",
            achieved=err_total,
        )
    return total


def _quad(fn, left, right, pts, tol, limit):
    # split at breakpoints ourselves so every piece is smooth for QUADPACK
    edges = [left] + list(pts) + [right]
    val = err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e, *info = integrate.quad(fn, a, b, epsabs=tol / len(edges), epsrel=1e-13,
                                     limit=limit, full_output=1)
        val += v
        err += e
    return val, err, None
