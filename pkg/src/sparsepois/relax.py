"""Perspective relaxation of the cardinality-constrained problem and its dual certificate.

The relaxation replaces ``z in {0,1}^m`` by the capped simplex
``{0 <= z <= 1, sum z <= k}``. Minimizing the perspective terms over ``z``
for fixed ``w`` is a water-filling problem, which makes the relaxation a
composite convex problem in ``(w, b)`` alone::

    min_{w,b}  L(w, b) + (1/gamma) * [ sum_{j in I1} w_j^2 + g_K(w_free) ]

with ``g_K(v) = min_z sum v_j^2 / z_j`` over the budget ``K = k - |I1|``.
Variables in ``I0`` are removed. Every iterate yields a dual vector
``lambda_bar`` from the gradient of the loss, and with it a certified lower
bound, so accuracy only affects tightness, never validity.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset import Dataset
from .errors import DegenerateCounts, InfeasibleFixing
from .loss import ETA_CAP, intercept_from_eta, minimize_smooth

__all__ = [
    "RelaxationCertificate",
    "RelaxationSolution",
    "bigM_relaxation_bound",
    "capped_simplex_waterfill",
    "recover_dual",
    "reverse_huber",
    "reverse_huber_prox",
    "rp_lambda_value",
    "solve_relaxation",
    "top_sum",
]

DEFAULT_SLACK = 1e-9


def capped_simplex_waterfill(mag, k: int):
    """Minimize ``sum mag_j^2 / z_j`` over ``{0 <= z <= 1, sum z <= k}``.

    Returns ``(z, theta, value)`` with ``z_j = min(1, mag_j / theta)``. When at
    most ``k`` entries are nonzero, ``theta = 0``, ``z`` is their indicator and
    ``value = sum mag_j^2`` (0/0 is taken as 0).
    """
    mag = np.ascontiguousarray(mag, dtype=np.float64)
    if k < 1:
        raise ValueError("budget k must be >= 1")
    if np.any(mag < 0):
        raise ValueError("mag must be non-negative")
    theta = _kernels.waterfill_theta(mag, int(k))
    if theta == 0.0:
        z = (mag > 0).astype(np.float64)
        return z, 0.0, float(mag @ mag)
    z = np.minimum(1.0, mag / theta)
    capped = mag >= theta
    value = float(mag[capped] @ mag[capped]) + theta * float(mag[~capped].sum())
    return z, theta, value


def _waterfill_value(mag, k):
    if mag.size == 0:
        return 0.0
    if k <= 0:
        return 0.0 if not np.any(mag) else math.inf
    return capped_simplex_waterfill(mag, k)[2]


def reverse_huber(w: float, nu: float) -> float:
    """``min_{z in [0,1]} w^2/z + nu*z``."""
    a = abs(w)
    r = math.sqrt(nu)
    if a <= r:
        return 2.0 * r * a
    return w * w + nu


def reverse_huber_prox(u: float, t: float, nu: float) -> float:
    """``argmin_x 0.5*(x-u)^2 + t*reverse_huber(x, nu)``.

    Soft-thresholding on the linear piece, ``u/(1+2t)`` on the quadratic
    piece; the two candidates are compared by objective at the seam.
    """
    r = math.sqrt(nu)
    a = abs(u)
    soft = math.copysign(max(a - 2.0 * t * r, 0.0), u)
    quad = u / (1.0 + 2.0 * t)
    soft_ok = abs(soft) <= r
    quad_ok = abs(quad) >= r
    if soft_ok and quad_ok:
        fs = 0.5 * (soft - u) ** 2 + t * reverse_huber(soft, nu)
        fq = 0.5 * (quad - u) ** 2 + t * reverse_huber(quad, nu)
        return soft if fs <= fq else quad
    return soft if soft_ok else quad


def top_sum(values, count: int) -> float:
    """Sum of the ``count`` largest entries (counted with multiplicity)."""
    v = np.asarray(values, dtype=np.float64)
    if count <= 0 or v.size == 0:
        return 0.0
    if count >= v.size:
        return float(v.sum())
    return float(np.partition(v, v.size - count)[v.size - count:].sum())


@dataclass
class SolverStats:
    iterations: int = 0
    grad_norm: float = math.nan
    gap: float = math.nan
    status: str = "converged"
    method: str = "joint"
    seconds: float = 0.0


@dataclass(eq=False)
class RelaxationSolution:
    w_star: np.ndarray
    b_star: float
    z_star: np.ndarray
    value: float
    nu: float
    k: int
    fixed0: tuple[int, ...] = ()
    fixed1: tuple[int, ...] = ()
    solver_stats: SolverStats = field(default_factory=SolverStats)
    lower_bound: float = -math.inf  # best certified bound seen during the solve (no slack)


@dataclass(eq=False)
class RelaxationCertificate:
    lambda_bar: np.ndarray
    theta: np.ndarray
    theta_k: float
    theta_k1: float
    v_rp_lambda: float
    v_lower: float
    slack_applied: float
    b_opt: float
    k: int
    budget: int
    fixed0: tuple[int, ...] = ()
    fixed1: tuple[int, ...] = ()


# --------------------------------------------------------------------------- #
# shared problem view over the active (not fixed-to-zero) columns


class _Problem:
    def __init__(self, d: Dataset, gamma: float, k: int, fixed0, fixed1):
        if d.y_sum <= 0:
            raise DegenerateCounts("all counts are zero; the intercept is unbounded below")
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if k < 0:
            raise ValueError("k must be non-negative")
        f0 = tuple(sorted({int(j) for j in fixed0}))
        f1 = tuple(sorted({int(j) for j in fixed1}))
        if set(f0) & set(f1):
            raise ValueError("fixed0 and fixed1 overlap")
        for j in f0 + f1:
            if not 0 <= j < d.m:
                raise IndexError(f"fixed index {j} out of range")
        if len(f1) > k:
            raise InfeasibleFixing(f"|fixed1|={len(f1)} exceeds k={k}")
        self.d = d
        self.gamma = float(gamma)
        self.k = int(k)
        self.fixed0 = f0
        self.fixed1 = f1
        mask = np.ones(d.m, dtype=bool)
        mask[list(f0)] = False
        self.active = np.flatnonzero(mask)
        self.xa = d.x if len(f0) == 0 else d.columns(self.active)
        is_one = np.zeros(d.m, dtype=bool)
        is_one[list(f1)] = True
        self.one = np.flatnonzero(is_one[self.active])
        self.free = np.flatnonzero(~is_one[self.active])
        self.budget = self.k - len(f1)
        self.n = d.n
        self.y = d.yf
        self.lf = d.log_fact_mean

    @property
    def p(self):
        return self.active.size

    def eta0(self, w):
        """``xa @ w`` exploiting sparsity of ``w``."""
        nz = np.flatnonzero(w)
        if nz.size == 0:
            return np.zeros(self.n)
        if nz.size * 4 < w.size:
            return self.xa[:, nz] @ w[nz]
        return self.xa @ w

    def loss_at(self, eta):
        total, resid = _kernels.poisson_terms(eta, self.y, ETA_CAP)
        if resid is None:
            return math.inf, None
        return total / self.n + self.lf, resid

    def penalty(self, w):
        wf = np.abs(w[self.free])
        wo = w[self.one]
        return (float(wo @ wo) + _waterfill_value(wf, self.budget)) / self.gamma

    def prox(self, w, step):
        t = step / self.gamma
        out = np.empty_like(w)
        if self.one.size:
            out[self.one] = w[self.one] / (1.0 + 2.0 * t)
        if self.free.size:
            out[self.free] = _kernels.persp_prox(np.ascontiguousarray(w[self.free]), t, self.budget)[0]
        return out

    def relaxed_z(self, w):
        """Water-filling indicators on the free block and the implied nu."""
        z = np.zeros(self.p)
        z[self.one] = 1.0
        nu = 0.0
        if self.free.size and self.budget > 0:
            zf, theta, _ = capped_simplex_waterfill(np.abs(w[self.free]), self.budget)
            z[self.free] = zf
            nu = theta * theta
        return z, nu

    def certify(self, w, eta0=None):
        """Primal value and dual bound at ``w`` with the intercept re-optimized.

        Returns ``(primal, dual, b_opt, lambda_bar_active)``.
        """
        if eta0 is None:
            eta0 = self.eta0(w)
        b = intercept_from_eta(eta0, self.d.y_sum)
        lval, resid = self.loss_at(eta0 + b)
        if resid is None:
            return math.inf, -math.inf, b, None
        lam = (-self.gamma / self.n) * (self.xa.T @ resid)
        primal = lval + self.penalty(w)
        lam2 = lam * lam
        sub = float(lam2[self.one].sum()) + top_sum(lam2[self.free], self.budget)
        dual = lval + float(lam @ w) / self.gamma - sub / (4.0 * self.gamma)
        return primal, dual, b, lam


def _spectral_sq(xa, iters=12, seed=0):
    """Estimate of the squared spectral norm of ``[xa, 1]``."""
    n, p = xa.shape
    v = np.random.default_rng(seed).standard_normal(p + 1)
    v /= np.linalg.norm(v)
    est = 1.0
    for _ in range(iters):
        u = xa @ v[:p] + v[p]
        wv = np.empty(p + 1)
        wv[:p] = xa.T @ u
        wv[p] = u.sum()
        est = float(np.linalg.norm(wv))
        if est == 0:
            return 1.0
        v = wv / est
    return est * 1.05


def _fista(prob: _Problem, prox, penalty, w0, b0, stop, max_iter, check_every=5):
    """Accelerated proximal gradient with backtracking and gradient-based restart.

    ``stop(it, w, eta0)`` is polled every ``check_every`` accepted iterations.
    Returns ``(w, b, iterations, last_grad_norm, stopped)``.
    """
    p, n = prob.p, prob.n
    w = np.array(w0, dtype=np.float64)
    b = float(b0)
    eta0 = prob.eta0(w)
    f, resid = prob.loss_at(eta0 + b)
    if resid is None:
        w[:] = 0.0
        eta0 = np.zeros(n)
        b = intercept_from_eta(eta0, prob.d.y_sum)
        f, resid = prob.loss_at(eta0 + b)
    lip = float(np.max(resid + prob.y)) * _spectral_sq(prob.xa) / n
    step = 1.0 / max(lip, 1e-12)

    yw, yb, yeta0 = w.copy(), b, eta0
    fy, ry = f, resid
    t = 1.0
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        gw = prob.xa.T @ ry / n
        gb = float(ry.sum()) / n
        while True:
            nw = prox(yw - step * gw, step)
            nb = yb - step * gb
            neta0 = prob.eta0(nw)
            fn, rn = prob.loss_at(neta0 + nb)
            dw = nw - yw
            db = nb - yb
            quad = fy + float(gw @ dw) + gb * db + (float(dw @ dw) + db * db) / (2.0 * step)
            if fn <= quad + 1e-12 * abs(fy):
                break
            step *= 0.5
            if step < 1e-30:
                return w, b, it, gnorm, False
        gnorm = math.sqrt(float(dw @ dw) + db * db) / step
        # gradient-based adaptive restart
        if float((yw - nw) @ (nw - w)) + (yb - nb) * (nb - b) > 0:
            t = 1.0
            yw, yb, yeta0 = nw.copy(), nb, neta0
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            t = t_new
            yw = nw + beta * (nw - w)
            yb = nb + beta * (nb - b)
            yeta0 = neta0 + beta * (neta0 - eta0)
        w, b, eta0 = nw, nb, neta0
        fy, ry = prob.loss_at(yeta0 + yb)
        if ry is None:
            t = 1.0
            yw, yb, yeta0 = w.copy(), b, eta0
            fy, ry = prob.loss_at(eta0 + b)
        step *= 1.02
        if it % check_every == 0 and stop(it, w, eta0):
            return w, b, it, gnorm, True
    return w, b, it, gnorm, False


def _initial_point(prob: _Problem, w0, b0):
    if w0 is None:
        w = np.zeros(prob.p)
    else:
        w0 = np.asarray(w0, dtype=np.float64)
        if w0.shape != (prob.d.m,):
            raise ValueError("warm start w0 must have length m")
        w = w0[prob.active].copy()
        if prob.budget <= 0:
            w[prob.free] = 0.0
    if b0 is None:
        b0 = intercept_from_eta(prob.eta0(w), prob.d.y_sum)
    return w, float(b0)


def _pack_solution(prob: _Problem, w_act, b, value, nu, z_act, stats, lower):
    d = prob.d
    w = np.zeros(d.m)
    w[prob.active] = w_act
    z = np.zeros(d.m)
    z[prob.active] = z_act
    return RelaxationSolution(
        w_star=w, b_star=float(b), z_star=z, value=float(value), nu=float(nu), k=prob.k,
        fixed0=prob.fixed0, fixed1=prob.fixed1, solver_stats=stats, lower_bound=float(lower),
    )


def _trivial_solution(prob: _Problem, method):
    """All coefficients forced to zero: only the intercept is free."""
    eta0 = np.zeros(prob.n)
    b = intercept_from_eta(eta0, prob.d.y_sum)
    val, _ = prob.loss_at(eta0 + b)
    z = np.zeros(prob.p)
    z[prob.one] = 1.0
    stats = SolverStats(iterations=0, grad_norm=0.0, gap=0.0, status="converged", method=method)
    return _pack_solution(prob, np.zeros(prob.p), b, val, 0.0, z, stats, val)


def solve_relaxation(d: Dataset, gamma: float, k: int, fixed0=(), fixed1=(), *,
                     tol_rel: float = 1e-8, max_iter: int = 20_000, w0=None, b0=None,
                     cutoff: float | None = None, deadline: float | None = None,
                     method: str = "joint") -> RelaxationSolution:
    """Solve the continuous relaxation with ``z_j = 0`` on ``fixed0`` and ``z_j = 1`` on ``fixed1``.

    ``method="joint"`` (default) runs accelerated proximal gradient on the
    composite form, with the water-filling prox. ``method="nu_bisection"``
    bisects the budget multiplier ``nu`` and solves reverse-Huber penalized
    subproblems; it is slower and kept as an independent route.

    Termination is on the certified relative duality gap ``tol_rel``, or
    early when the certified bound reaches ``cutoff``, or at ``deadline``
    (a ``time.monotonic()`` value).
    """
    prob = _Problem(d, gamma, k, fixed0, fixed1)
    if method == "nu_bisection":
        return _solve_nu_bisection(prob, tol_rel, max_iter, w0, b0)
    if method != "joint":
        raise ValueError(f"unknown method {method!r}")
    t_start = time.perf_counter()
    if prob.p == 0 or (prob.one.size == 0 and prob.budget == 0):
        return _trivial_solution(prob, method)

    w, b = _initial_point(prob, w0, b0)
    best = {"lower": -math.inf, "gap": math.inf, "status": "max_iter", "cert": None}

    def stop(it, wc, eta0):
        primal, dual, bopt, _ = prob.certify(wc, eta0)
        best["lower"] = max(best["lower"], dual)
        gap = primal - dual
        best["gap"] = gap
        best["cert"] = (wc.copy(), bopt, primal)
        if math.isfinite(primal) and (gap <= tol_rel * max(abs(primal), 1e-300) or gap <= 1e-14):
            best["status"] = "converged"
            return True
        if cutoff is not None and best["lower"] >= cutoff:
            best["status"] = "cutoff"
            return True
        if deadline is not None and time.monotonic() >= deadline:
            best["status"] = "deadline"
            return True
        return False

    if not stop(0, w, prob.eta0(w)):
        w, b, iters, gnorm, _ = _fista(prob, prob.prox, prob.penalty, w, b, stop, max_iter)
    else:
        iters, gnorm = 0, 0.0
    if best["cert"] is None or not np.array_equal(best["cert"][0], w):
        stop(-1, w, prob.eta0(w))
    w, bopt, primal = best["cert"]
    z, nu = prob.relaxed_z(w)
    stats = SolverStats(iterations=iters, grad_norm=gnorm, gap=best["gap"], status=best["status"],
                        method=method, seconds=time.perf_counter() - t_start)
    return _pack_solution(prob, w, bopt, primal, nu, z, stats, best["lower"])


# --------------------------------------------------------------------------- #
# nu-bisection route


def _rh_penalty(prob: _Problem, nu):
    r = math.sqrt(nu)

    def penalty(w):
        wf = np.abs(w[prob.free])
        wo = w[prob.one]
        rh = np.where(wf <= r, 2.0 * r * wf, wf * wf + nu)
        return (float(wo @ wo) + float(rh.sum())) / prob.gamma

    return penalty


def _rh_prox(prob: _Problem, nu):
    def prox(w, step):
        t = step / prob.gamma
        out = np.empty_like(w)
        out[prob.one] = w[prob.one] / (1.0 + 2.0 * t)
        out[prob.free] = _kernels.rh_prox(np.ascontiguousarray(w[prob.free]), t, nu)
        return out

    return prox


def _rh_z(w_free, nu):
    a = np.abs(w_free)
    if nu <= 0:
        return (a > 0).astype(float)
    return np.minimum(1.0, a / math.sqrt(nu))


def _solve_inner(prob: _Problem, nu, w, b, tol_rel, max_iter):
    """Minimize ``L + (1/gamma)[sum_one w^2 + sum_free rh(w, nu)]``; returns (w, b, dual_value)."""
    pen = _rh_penalty(prob, nu)
    out = {"dual": -math.inf}

    def stop(it, wc, eta0):
        bopt = intercept_from_eta(eta0, prob.d.y_sum)
        lval, resid = prob.loss_at(eta0 + bopt)
        if resid is None:
            return False
        lam = (-prob.gamma / prob.n) * (prob.xa.T @ resid)
        lam2 = lam * lam
        inner_lb = (lval + float(lam @ wc) / prob.gamma
                    - float(lam2[prob.one].sum()) / (4.0 * prob.gamma)
                    + float(np.minimum(0.0, nu - lam2[prob.free] / 4.0).sum()) / prob.gamma)
        primal = lval + pen(wc)
        out["dual"] = max(out["dual"], inner_lb)
        return primal - inner_lb <= tol_rel * max(abs(primal), 1e-300)

    w, b, it, _, _ = _fista(prob, _rh_prox(prob, nu), pen, w, b, stop, max_iter)
    return w, b, out["dual"], it


def _solve_nu_bisection(prob: _Problem, tol_rel, max_iter, w0, b0):
    t_start = time.perf_counter()
    if prob.p == 0 or (prob.one.size == 0 and prob.budget == 0):
        return _trivial_solution(prob, "nu_bisection")
    w, b = _initial_point(prob, w0, b0)
    inner_tol = tol_rel * 1e-2
    total_it = 0
    best_dual = -math.inf

    def evaluate(nu, w, b):
        nonlocal total_it, best_dual
        w, b, dual_inner, it = _solve_inner(prob, nu, w, b, inner_tol, max_iter)
        total_it += it
        best_dual = max(best_dual, dual_inner - nu * prob.budget / prob.gamma)
        return w, b, float(_rh_z(w[prob.free], nu).sum())

    w, b, s = evaluate(0.0, w, b)
    nu_star = 0.0
    if s > prob.budget + 1e-8:
        lo, hi = 0.0, 1.0
        w_hi, b_hi, s_hi = evaluate(hi, w, b)
        while s_hi > prob.budget:
            lo, hi = hi, hi * 4.0
            w, b = w_hi, b_hi
            w_hi, b_hi, s_hi = evaluate(hi, w_hi, b_hi)
        w, b = w_hi, b_hi
        while hi - lo > 1e-12 * hi:
            mid = 0.5 * (lo + hi)
            wm, bm, sm = evaluate(mid, w, b)
            if abs(sm - prob.budget) <= 1e-8:
                w, b, hi = wm, bm, mid
                break
            if sm > prob.budget:
                lo = mid
            else:
                hi, w, b = mid, wm, bm
        nu_star = hi
    primal, dual, bopt, _ = prob.certify(w)
    best_dual = max(best_dual, dual)
    z, _ = prob.relaxed_z(w)
    stats = SolverStats(iterations=total_it, grad_norm=math.nan, gap=primal - best_dual,
                        status="converged", method="nu_bisection",
                        seconds=time.perf_counter() - t_start)
    return _pack_solution(prob, w, bopt, primal, nu_star, z, stats, best_dual)


# --------------------------------------------------------------------------- #
# dual recovery and lower bounds


def recover_dual(sol: RelaxationSolution, d: Dataset, gamma: float,
                 slack: float = DEFAULT_SLACK) -> RelaxationCertificate:
    """Dual vector from the relaxation point and the certified lower bound it implies.

    The intercept is re-optimized in closed form first, so ``(w*, b_opt)`` is
    an exact minimizer of ``L(w, b) + lambda_bar.w / gamma`` and the bound
    holds at any ``w*``. Entries of ``lambda_bar`` on ``fixed0`` are 0 and do
    not enter the bound.
    """
    prob = _Problem(d, gamma, sol.k, sol.fixed0, sol.fixed1)
    w_act = np.asarray(sol.w_star, dtype=np.float64)[prob.active]
    _, dual, bopt, lam_act = prob.certify(w_act)
    if lam_act is None:
        raise FloatingPointError("relaxation point overflows the exponent cap")
    lam = np.zeros(d.m)
    lam[prob.active] = lam_act
    free_sq = np.sort((lam_act[prob.free]) ** 2)[::-1]
    kb = prob.budget
    theta_k = float(free_sq[kb - 1]) if 1 <= kb <= free_sq.size else math.inf
    theta_k1 = float(free_sq[kb]) if kb < free_sq.size else 0.0
    delta = slack * (1.0 + abs(dual))
    return RelaxationCertificate(
        lambda_bar=lam, theta=free_sq, theta_k=theta_k, theta_k1=theta_k1,
        v_rp_lambda=dual, v_lower=dual - delta, slack_applied=delta, b_opt=bopt,
        k=sol.k, budget=kb, fixed0=sol.fixed0, fixed1=sol.fixed1,
    )


def rp_lambda_value(lam, d: Dataset, gamma: float, k: int, tol_g: float = 1e-10) -> float:
    """Value of the Lagrangian relaxation for an arbitrary multiplier vector.

    ``min_{w,b} L(w,b) + lam.w/gamma`` is solved by damped Newton; the top-k
    term ``sum(lam^2)/(4 gamma)`` is subtracted. Returns ``-inf`` when the
    inner problem is unbounded below.
    """
    if d.y_sum <= 0:
        raise DegenerateCounts("all counts are zero; the intercept is unbounded below")
    lam = np.asarray(lam, dtype=np.float64)
    theta0 = np.zeros(d.m + 1)
    theta0[-1] = intercept_from_eta(np.zeros(d.n), d.y_sum)
    res = minimize_smooth(d.x, d.yf, 0.0, lam / gamma, theta0, d.log_fact_mean,
                          tol_g=tol_g, max_iter=500)
    if not res.converged:
        # unbounded directions show up as a runaway, non-converging objective
        if res.value < -1e6 or not np.all(np.isfinite(res.theta)):
            return -math.inf
        if res.grad_norm > 1e-6:
            return -math.inf
    return res.value - top_sum(lam * lam, k) / (4.0 * gamma)


def _project_capped_l1(v, cap, total):
    """Euclidean projection onto ``{|x_j| <= cap, sum |x_j| <= total}``."""
    a = np.minimum(np.abs(v), cap)
    if a.sum() <= total:
        return np.sign(v) * a
    av = np.abs(v)
    # sum(clip(av - tau, 0, cap)) = total, tau in (0, max av)
    lo, hi = 0.0, float(av.max())
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        x = np.clip(av - tau, 0.0, cap)
        s = x.sum()
        act = (av - tau > 0) & (av - tau < cap)
        nact = np.count_nonzero(act)
        if nact:
            ncap = np.count_nonzero(av - tau >= cap)
            cand = (float(av[act].sum()) - (total - ncap * cap)) / nact
            xc = np.clip(av - cand, 0.0, cap)
            if abs(xc.sum() - total) <= 1e-13 * total:
                return np.sign(v) * xc
        if s > total:
            lo = tau
        else:
            hi = tau
        if hi - lo <= 1e-16 * hi:
            break
    return np.sign(v) * np.clip(av - hi, 0.0, cap)


def bigM_relaxation_bound(d: Dataset, gamma: float, k: int, M: float, tol_rel: float = 1e-7,
                          max_iter: int = 50_000) -> float:
    """Certified lower bound on the continuous relaxation of the big-M formulation.

    With ``z_j = |w_j| / M`` optimal, the relaxation is the ridge-Poisson
    problem over ``{|w_j| <= M, |w|_1 <= k M}``. Solved by accelerated
    projected gradient; the returned value is the lower bound from the
    strongly convex quadratic model minimized over the feasible set.
    """
    if d.y_sum <= 0:
        raise DegenerateCounts("all counts are zero; the intercept is unbounded below")
    if M <= 0:
        raise ValueError("M must be positive")
    total = k * M
    ridge = 1.0 / gamma

    def proj(w, step):
        return _project_capped_l1(w, M, total)

    out = {"lb": -math.inf, "ub": math.inf}

    def certify(w, eta0):
        bopt = intercept_from_eta(eta0, d.y_sum)
        total_terms, resid = _kernels.poisson_terms(eta0 + bopt, d.yf, ETA_CAP)
        if resid is None:
            return False
        f = total_terms / d.n + d.log_fact_mean + ridge * float(w @ w)
        g = d.x.T @ resid / d.n + 2.0 * ridge * w
        v = _project_capped_l1(w - 0.5 * gamma * g, M, total)
        dv = v - w
        lb = f + float(g @ dv) + ridge * float(dv @ dv)
        out["lb"] = max(out["lb"], lb)
        out["ub"] = min(out["ub"], f)
        return out["ub"] - out["lb"] <= tol_rel * max(abs(out["ub"]), 1e-300)

    w = np.zeros(d.m)
    b = intercept_from_eta(np.zeros(d.n), d.y_sum)
    if certify(w, np.zeros(d.n)):
        return out["lb"]
    _fista_ridge(d, ridge, proj, w, b, lambda it, wc, eta0: certify(wc, eta0), max_iter)
    return out["lb"]


def _fista_ridge(d: Dataset, ridge, proj, w0, b0, stop, max_iter, check_every=5):
    """Accelerated projected gradient for ``L(w,b) + ridge*|w|^2`` over a convex set."""
    n = d.n
    x = d.x
    y = d.yf

    def smooth(w, b):
        eta0 = x @ w
        total, resid = _kernels.poisson_terms(eta0 + b, y, ETA_CAP)
        if resid is None:
            return math.inf, None, eta0
        return total / n + ridge * float(w @ w), resid, eta0

    w, b = np.array(w0, dtype=float), float(b0)
    f, r, eta0 = smooth(w, b)
    lip = (float(np.max(r + y)) * _spectral_sq(x) / n) + 2.0 * ridge
    step = 1.0 / lip
    yw, yb = w.copy(), b
    fy, ry, _ = f, r, eta0
    t = 1.0
    for it in range(1, max_iter + 1):
        gw = x.T @ ry / n + 2.0 * ridge * yw
        gb = float(ry.sum()) / n
        while True:
            nw = proj(yw - step * gw, step)
            nb = yb - step * gb
            fn, rn, neta0 = smooth(nw, nb)
            dw, db = nw - yw, nb - yb
            if fn <= fy + float(gw @ dw) + gb * db + (float(dw @ dw) + db * db) / (2 * step) + 1e-12 * abs(fy):
                break
            step *= 0.5
            if step < 1e-30:
                return w, b
        if float((yw - nw) @ (nw - w)) + (yb - nb) * (nb - b) > 0:
            t = 1.0
            yw, yb = nw.copy(), nb
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            t = t_new
            yw, yb = nw + beta * (nw - w), nb + beta * (nb - b)
        w, b = nw, nb
        fy, ry, _ = smooth(yw, yb)
        if ry is None:
            t = 1.0
            yw, yb = w.copy(), b
            fy, ry, _ = smooth(yw, yb)
        step *= 1.02
        if it % check_every == 0 and stop(it, w, neta0):
            break
    return w, b
