"""Poisson loss, its gradient, the closed-form intercept and the restricted solver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import _kernels
from .dataset import Dataset
from .errors import DegenerateCounts, OverflowExponent

__all__ = [
    "ETA_CAP",
    "Coefficients",
    "LossEvaluation",
    "RestrictedFit",
    "log_factorial",
    "minimize_smooth",
    "optimal_intercept",
    "poisson_loss",
    "solve_restricted",
]

# linear predictors above this are treated as overflow
ETA_CAP = 500.0

_LOG_FACT_TABLE = tuple(math.log(math.factorial(i)) for i in range(21))


def log_factorial(y: int) -> float:
    if y < 0:
        raise ValueError("log_factorial needs y >= 0")
    if y <= 20:
        return _LOG_FACT_TABLE[y]
    return math.lgamma(y + 1.0)


@dataclass(frozen=True, eq=False)
class Coefficients:
    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("w must be a vector")
        if not (np.all(np.isfinite(w)) and math.isfinite(self.b)):
            raise ValueError("coefficients must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.w))

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "b": self.b}

    def __eq__(self, other):
        if not isinstance(other, Coefficients):
            return NotImplemented
        return np.array_equal(self.w, other.w) and self.b == other.b

    __hash__ = None


@dataclass(frozen=True)
class LossEvaluation:
    value: float
    grad_w: np.ndarray
    grad_b: float
    linear_predictors: np.ndarray


def poisson_loss(c: Coefficients, d: Dataset) -> LossEvaluation:
    """Average negative Poisson log-likelihood, including the log y! term."""
    if c.w.shape != (d.m,):
        raise ValueError(f"w has length {c.w.size}, dataset has m={d.m}")
    eta = d.x @ c.w + c.b
    total, resid = _kernels.poisson_terms(eta, d.yf, ETA_CAP)
    if resid is None:
        raise OverflowExponent(f"linear predictor {eta.max():.6g} exceeds cap {ETA_CAP}")
    n = d.n
    return LossEvaluation(
        value=total / n + d.log_fact_mean,
        grad_w=d.x.T @ resid / n,
        grad_b=float(resid.sum() / n),
        linear_predictors=eta,
    )


def _require_counts(d: Dataset) -> None:
    if d.y_sum <= 0:
        raise DegenerateCounts("all counts are zero; the intercept is unbounded below")


def intercept_from_eta(eta0: np.ndarray, y_sum: float) -> float:
    """``log(sum y / sum exp(eta0))`` computed stably; ``eta0`` excludes the intercept."""
    return math.log(y_sum) - float(logsumexp(eta0))


def optimal_intercept(w, d: Dataset) -> float:
    """Minimizer of ``b -> L(w, b)`` in closed form."""
    _require_counts(d)
    w = np.asarray(w, dtype=np.float64)
    return intercept_from_eta(d.x @ w, d.y_sum)


@dataclass
class SmoothResult:
    theta: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def minimize_smooth(xa, y, ridge, lin, theta0, log_fact_mean=0.0, tol_g=None,
                    max_iter=10_000, rel_tol_g=1e-9):
    """Damped Newton for ``mean(exp(eta) - y*eta) + lf + ridge*|w|^2 + lin.w``.

    ``eta = xa @ w + b`` and ``theta = (w, b)``. Steps that push any linear
    predictor above :data:`ETA_CAP` are rejected by the backtracking line
    search. ``tol_g`` is an absolute bound on the gradient sup-norm; when
    omitted it is ``rel_tol_g * max(1, |objective|)``.
    """
    n, p = xa.shape
    a = np.empty((n, p + 1))
    a[:, :p] = xa
    a[:, p] = 1.0
    reg = np.full(p + 1, 2.0 * ridge)
    reg[p] = 0.0
    linv = np.zeros(p + 1)
    if lin is not None:
        linv[:p] = lin

    def value(th):
        eta = a @ th
        total, resid = _kernels.poisson_terms(eta, y, ETA_CAP)
        if resid is None:
            return math.inf, None
        w = th[:p]
        return total / n + log_fact_mean + ridge * float(w @ w) + float(linv @ th), resid

    theta = np.array(theta0, dtype=np.float64)
    f, resid = value(theta)
    if not math.isfinite(f):
        raise OverflowExponent("initial point overflows the exponent cap")
    trace = [f]
    gnorm = math.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        g = a.T @ resid / n + reg * theta + linv
        gnorm = float(np.max(np.abs(g)))
        tol = tol_g if tol_g is not None else rel_tol_g * max(1.0, abs(f))
        if gnorm <= tol:
            converged = True
            it -= 1
            break
        mu = resid + y
        h = (a.T * mu) @ a / n
        h[np.diag_indices_from(h)] += reg
        try:
            step = -linalg.cho_solve(linalg.cho_factor(h, check_finite=False), g, check_finite=False)
        except linalg.LinAlgError:
            step = -linalg.lstsq(h, g, check_finite=False)[0]
        slope = float(g @ step)
        if not slope < 0:
            step = -g
            slope = -float(g @ g)
        # predicted decrease below float resolution: take the pure Newton step
        tiny = -slope <= 1e-13 * max(1.0, abs(f))
        s = 1.0
        while True:
            cand = theta + s * step
            fc, rc = value(cand)
            if fc <= f + 1e-4 * s * slope:
                break
            if tiny and fc <= f + 1e-14 * max(1.0, abs(f)):
                break
            s *= 0.5
            if s < 1e-20:
                fc = None
                break
        if fc is None:
            break
        if fc > f and not tiny:
            break
        theta, f, resid = cand, fc, rc
        trace.append(f)
    return SmoothResult(theta, f, gnorm, it, converged, trace)


@dataclass(frozen=True, eq=False)
class RestrictedFit:
    coef: Coefficients
    support: tuple[int, ...]
    objective: float
    converged: bool
    iterations: int
    grad_norm: float
    trace: tuple = ()


def solve_restricted(support, d: Dataset, gamma: float, tol_g=None, max_iter=10_000) -> RestrictedFit:
    """Ridge-Poisson fit using only the columns in ``support``.

    Returns the minimizer of ``L(w, b) + |w|^2 / gamma`` over coefficient
    vectors supported on ``support``; the objective includes ``mean(log y!)``.
    A run that hits ``max_iter`` returns the best iterate with
    ``converged=False``.
    """
    _require_counts(d)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    support = tuple(sorted({int(j) for j in support}))
    if support and (support[0] < 0 or support[-1] >= d.m):
        raise IndexError("support index out of range")
    xa = d.columns(list(support)) if support else np.empty((d.n, 0))
    theta0 = np.zeros(len(support) + 1)
    theta0[-1] = intercept_from_eta(np.zeros(d.n), d.y_sum)
    res = minimize_smooth(xa, d.yf, 1.0 / gamma, None, theta0, d.log_fact_mean,
                          tol_g=tol_g, max_iter=max_iter)
    w = np.zeros(d.m)
    w[list(support)] = res.theta[:-1]
    return RestrictedFit(
        coef=Coefficients(w, res.theta[-1]),
        support=support,
        objective=res.value,
        converged=res.converged,
        iterations=res.iterations,
        grad_norm=res.grad_norm,
        trace=tuple(res.trace),
    )
