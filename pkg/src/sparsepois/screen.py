"""Safe screening of the indicator variables and the dual-guided greedy upper bound."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .loss import Coefficients, RestrictedFit, solve_restricted
from .relax import RelaxationCertificate, RelaxationSolution, recover_dual, solve_relaxation

__all__ = [
    "GreedyResult",
    "ScreeningResult",
    "apply_screening_rules",
    "greedy_support",
    "greedy_upper_bound",
    "safe_screen",
    "screening_swap_costs",
]


@dataclass(frozen=True, eq=False)
class GreedyResult:
    ub: float
    incumbent: Coefficients
    support: tuple[int, ...]
    fit: RestrictedFit


@dataclass(eq=False)
class ScreeningResult:
    fixed0: tuple[int, ...]
    fixed1: tuple[int, ...]
    ub: float
    incumbent: Coefficients
    certificate: RelaxationCertificate | None
    relaxation: RelaxationSolution | None = None
    greedy_support: tuple[int, ...] = ()
    timings: dict = field(default_factory=dict)

    @property
    def v_lower(self) -> float:
        return self.certificate.v_lower if self.certificate is not None else float("-inf")

    def to_dict(self) -> dict:
        return {
            "fixed0_count": len(self.fixed0),
            "fixed1_count": len(self.fixed1),
            "fixed0": list(self.fixed0),
            "fixed1": list(self.fixed1),
            "ub": self.ub,
            "v_lower": self.v_lower,
            "time_relax_s": self.timings.get("relax", 0.0),
            "time_ub_s": self.timings.get("ub", 0.0),
            "time_rules_s": self.timings.get("rules", 0.0),
        }


def greedy_support(cert: RelaxationCertificate, k: int | None = None) -> tuple[int, ...]:
    """Variables fixed to one plus the largest ``lambda_bar**2`` among the free ones.

    Ties go to the lower index; if fewer than the budget have nonzero dual
    value the set is padded with the lowest-index remaining free variables.
    """
    lam2 = cert.lambda_bar ** 2
    m = lam2.size
    budget = cert.budget if k is None else k - len(cert.fixed1)
    blocked = np.zeros(m, dtype=bool)
    blocked[list(cert.fixed0)] = True
    blocked[list(cert.fixed1)] = True
    free = np.flatnonzero(~blocked)
    order = free[np.argsort(-lam2[free], kind="stable")]
    chosen = set(cert.fixed1) | {int(j) for j in order[:max(budget, 0)]}
    return tuple(sorted(chosen))


def greedy_upper_bound(cert: RelaxationCertificate, d: Dataset, gamma: float, k: int) -> GreedyResult:
    """Fit the ridge-Poisson model on the top-``k`` dual coordinates; its objective is an upper bound."""
    if k < 1:
        raise ValueError("k must be >= 1")
    support = greedy_support(cert, k)
    fit = solve_restricted(support, d, gamma)
    return GreedyResult(ub=fit.objective, incumbent=fit.coef, support=support, fit=fit)


def screening_swap_costs(lambda_sq_j: float, theta_k: float, theta_k1: float, gamma: float):
    """Increase of the Lagrangian bound when variable j is forced out of / into the top-k set.

    Returns ``(cost_if_fixed_zero, cost_if_fixed_one)``; an entry is ``None``
    when the variable is not in the corresponding regime.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not theta_k >= theta_k1 >= 0:
        raise ValueError("need theta_k >= theta_k1 >= 0")
    c0 = (lambda_sq_j - theta_k1) / (4.0 * gamma) if lambda_sq_j >= theta_k else None
    c1 = (theta_k - lambda_sq_j) / (4.0 * gamma) if lambda_sq_j <= theta_k1 else None
    return c0, c1


def apply_screening_rules(cert: RelaxationCertificate, ub: float, gamma: float):
    """Indices provably at one / at zero in every optimum, given bound ``cert`` and incumbent ``ub``.

    If forcing ``z_j = 0`` lifts the certified bound above ``ub``, every
    optimum has ``z_j = 1`` (and symmetrically). Returns the newly fixed
    ``(fixed0, fixed1)`` among the certificate's free variables.
    """
    lam2 = cert.lambda_bar ** 2
    m = lam2.size
    free_mask = np.ones(m, dtype=bool)
    free_mask[list(cert.fixed0)] = False
    free_mask[list(cert.fixed1)] = False
    if cert.budget <= 0 or cert.budget >= np.count_nonzero(free_mask):
        return (), ()
    tk, tk1 = cert.theta_k, cert.theta_k1
    v = cert.v_lower
    to_one = free_mask & (lam2 >= tk) & (v + (lam2 - tk1) / (4.0 * gamma) > ub)
    to_zero = free_mask & ~to_one & (lam2 <= tk1) & (v + (tk - lam2) / (4.0 * gamma) > ub)
    return (tuple(int(j) for j in np.flatnonzero(to_zero)),
            tuple(int(j) for j in np.flatnonzero(to_one)))


def safe_screen(d: Dataset, gamma: float, k: int, *, rounds: int = 1, tol_rel: float = 1e-8,
                relaxation: RelaxationSolution | None = None) -> ScreeningResult:
    """Relaxation, dual recovery, greedy bound and the pegging rules in one pass.

    ``rounds > 1`` re-solves the relaxation under the fixings found so far and
    screens again with the best upper bound (off by default).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    timings = {"relax": 0.0, "ub": 0.0, "rules": 0.0}
    if k >= d.m:
        t0 = time.perf_counter()
        fit = solve_restricted(range(d.m), d, gamma)
        timings["ub"] = time.perf_counter() - t0
        return ScreeningResult((), (), fit.objective, fit.coef, None, None,
                               tuple(range(d.m)), timings)

    t0 = time.perf_counter()
    sol = relaxation if relaxation is not None else solve_relaxation(d, gamma, k, tol_rel=tol_rel)
    cert = recover_dual(sol, d, gamma)
    t1 = time.perf_counter()
    greedy = greedy_upper_bound(cert, d, gamma, k)
    t2 = time.perf_counter()
    fixed0, fixed1 = apply_screening_rules(cert, greedy.ub, gamma)
    t3 = time.perf_counter()
    timings["relax"] += t1 - t0
    timings["ub"] += t2 - t1
    timings["rules"] += t3 - t2

    root_cert, root_sol = cert, sol
    ub, best = greedy.ub, greedy
    f0, f1 = set(fixed0), set(fixed1)
    for _ in range(rounds - 1):
        if not (fixed0 or fixed1) or len(f0) + len(f1) >= d.m:
            break
        t0 = time.perf_counter()
        sol = solve_relaxation(d, gamma, k, sorted(f0), sorted(f1), tol_rel=tol_rel, w0=sol.w_star)
        cert = recover_dual(sol, d, gamma)
        t1 = time.perf_counter()
        g = greedy_upper_bound(cert, d, gamma, k)
        if g.ub < ub:
            ub, best = g.ub, g
        t2 = time.perf_counter()
        fixed0, fixed1 = apply_screening_rules(cert, ub, gamma)
        f0.update(fixed0)
        f1.update(fixed1)
        timings["relax"] += t1 - t0
        timings["ub"] += t2 - t1
        timings["rules"] += time.perf_counter() - t2

    return ScreeningResult(
        fixed0=tuple(sorted(f0)), fixed1=tuple(sorted(f1)), ub=ub, incumbent=best.incumbent,
        certificate=root_cert, relaxation=root_sol, greedy_support=best.support, timings=timings,
    )
