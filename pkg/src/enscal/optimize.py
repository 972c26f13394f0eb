"""Derivative-free simplex minimisation with per-coordinate constraint transforms.

Constraints are handled by reparameterisation: the simplex moves in an
unconstrained space ``u`` and the objective sees ``x = T(u)`` where ``T`` is
applied coordinate-wise:

* ``identity``: ``x = u``
* ``square``: ``x = u**2`` (``x >= 0``)
* ``logistic``: ``x = 1 / (1 + exp(-u))`` (``0 < x < 1``)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logit

from .errors import SetupError

TRANSFORMS = ("identity", "square", "logistic")


def _check_transforms(transforms, dim):
    if transforms is None:
        return ("identity",) * dim
    transforms = tuple(transforms)
    if len(transforms) != dim:
        raise SetupError(f"{len(transforms)} transforms for a {dim}-dimensional problem")
    bad = [t for t in transforms if t not in TRANSFORMS]
    if bad:
        raise SetupError(f"unknown transforms {bad}")
    return transforms


def to_constrained(u, transforms) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    x = u.copy()
    for i, t in enumerate(transforms):
        if t == "square":
            x[i] = u[i] * u[i]
        elif t == "logistic":
            x[i] = expit(u[i])
    return x


def to_unconstrained(x, transforms) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = x.copy()
    for i, t in enumerate(transforms):
        if t == "square":
            if x[i] < 0:
                raise SetupError(f"coordinate {i} must be >= 0 under the square transform")
            u[i] = math.sqrt(x[i])
        elif t == "logistic":
            if not 0 < x[i] < 1:
                raise SetupError(f"coordinate {i} must lie in (0, 1) under the logistic transform")
            u[i] = logit(x[i])
    return u


@dataclass
class ObjectiveSpec:
    """Objective over the constrained space plus a start in the unconstrained one."""

    objective: Callable[[np.ndarray], float]
    start: Sequence[float]
    transforms: Sequence[str] | None = None

    def __post_init__(self):
        self.start = np.atleast_1d(np.asarray(self.start, dtype=float))
        if self.start.ndim != 1 or self.start.size < 1:
            raise SetupError("start must be a non-empty vector")
        self.transforms = _check_transforms(self.transforms, self.start.size)

    @property
    def dimension(self) -> int:
        return self.start.size

    @classmethod
    def from_constrained(cls, objective, x0, transforms=None) -> "ObjectiveSpec":
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        transforms = _check_transforms(transforms, x0.size)
        return cls(objective, to_unconstrained(x0, transforms), transforms)


@dataclass(frozen=True)
class OptimResult:
    argmin: np.ndarray
    value: float
    iterations: int
    converged: bool
    evaluations: int = 0
    initial_value: float = math.nan
    history: tuple = field(default=(), repr=False)


def _wrap(spec: ObjectiveSpec):
    counter = [0]

    def f(u):
        counter[0] += 1
        try:
            v = float(spec.objective(to_constrained(u, spec.transforms)))
        except (ArithmeticError, ValueError):
            return math.inf
        return v if math.isfinite(v) else math.inf

    return f, counter


def _initial_simplex(u0):
    n = u0.size
    simplex = np.tile(u0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += max(0.1 * abs(u0[i]), 0.05)
    return simplex


def nelder_mead(f, u0, tol=1e-8, max_iter=10000):
    """Plain Nelder-Mead with restarts from the incumbent after convergence.

    Returns ``(u, f(u), iterations, converged, best_history)``.
    """
    alpha, gamma, rho, shrink = 1.0, 2.0, 0.5, 0.5
    u0 = np.asarray(u0, dtype=float)
    best_u, best_f = u0.copy(), f(u0)
    history = [best_f]
    it = 0
    converged = False
    while it < max_iter:
        simplex = _initial_simplex(best_u)
        fs = np.array([best_f] + [f(v) for v in simplex[1:]])
        start_f = best_f
        local_conv = False
        while it < max_iter:
            order = np.argsort(fs, kind="stable")
            simplex, fs = simplex[order], fs[order]
            diam = np.max(np.abs(simplex[1:] - simplex[0]))
            spread = fs[-1] - fs[0] if np.all(np.isfinite(fs)) else math.inf
            if diam < tol and spread < tol:
                local_conv = True
                break
            it += 1
            centroid = simplex[:-1].mean(axis=0)
            xr = centroid + alpha * (centroid - simplex[-1])
            fr = f(xr)
            if fr < fs[0]:
                xe = centroid + gamma * (xr - centroid)
                fe = f(xe)
                if fe < fr:
                    simplex[-1], fs[-1] = xe, fe
                else:
                    simplex[-1], fs[-1] = xr, fr
            elif fr < fs[-2]:
                simplex[-1], fs[-1] = xr, fr
            else:
                if fr < fs[-1]:
                    xc = centroid + rho * (xr - centroid)
                    fc = f(xc)
                    accept = fc <= fr
                else:
                    xc = centroid + rho * (simplex[-1] - centroid)
                    fc = f(xc)
                    accept = fc < fs[-1]
                if accept:
                    simplex[-1], fs[-1] = xc, fc
                else:
                    simplex[1:] = simplex[0] + shrink * (simplex[1:] - simplex[0])
                    fs[1:] = [f(v) for v in simplex[1:]]
            history.append(min(history[-1], float(fs.min())))
        j = int(np.argmin(fs))
        if fs[j] < best_f:
            best_u, best_f = simplex[j].copy(), float(fs[j])
        if local_conv and start_f - best_f < tol:
            converged = True
            break
    return best_u, best_f, it, converged, tuple(history)


def minimize(spec: ObjectiveSpec, tol: float = 1e-8, max_iter: int = 10000, multistart: bool = True) -> OptimResult:
    """Minimise ``spec.objective`` from ``spec.start``.

    Runs the simplex from the given start and, when ``multistart`` is set,
    from a copy perturbed by +10% per coordinate (+0.1 for zero coordinates);
    the better of the two is returned.  Non-finite objective values are
    treated as +inf.  The result is never worse than the start.
    """
    if not tol > 0:
        raise SetupError("tol must be > 0")
    if max_iter < 1:
        raise SetupError("max_iter must be >= 1")
    f, counter = _wrap(spec)
    f0 = f(spec.start)
    if not math.isfinite(f0):
        raise SetupError("objective is not finite at the initial point")
    starts = [spec.start]
    if multistart:
        starts.append(np.where(spec.start == 0, 0.1, spec.start * 1.1))
    best = None
    for s in starts:
        run = nelder_mead(f, s, tol=tol, max_iter=max_iter)
        if best is None or run[1] < best[1]:
            best = run
    u, val, iters, conv, hist = best
    if not val <= f0:
        u, val = spec.start, f0
    return OptimResult(
        argmin=to_constrained(u, spec.transforms),
        value=float(val),
        iterations=iters,
        converged=conv,
        evaluations=counter[0],
        initial_value=f0,
        history=hist,
    )
