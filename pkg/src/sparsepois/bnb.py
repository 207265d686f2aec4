"""Best-first branch-and-bound on the feature indicators, and the exhaustive oracle."""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import Dataset
from .errors import NoFractional, TooLarge
from .loss import Coefficients, solve_restricted
from .relax import DEFAULT_SLACK, recover_dual, solve_relaxation
from .screen import ScreeningResult, apply_screening_rules, greedy_support, safe_screen

log = logging.getLogger(__name__)

__all__ = [
    "Node",
    "SolveReport",
    "Status",
    "branch_and_bound",
    "branching_variable",
    "enumerate_supports",
    "exhaustive_solve",
    "gap_percent",
]

INT_TOL = 1e-9
EXHAUSTIVE_GUARD = 10**6


class Status(str, Enum):
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"
    NODE_LIMIT = "NodeLimit"


@dataclass(frozen=True)
class Node:
    fixed0: tuple[int, ...]
    fixed1: tuple[int, ...]
    lower_bound: float
    depth: int
    node_id: int = 0


@dataclass(eq=False)
class SolveReport:
    incumbent: Coefficients | None
    support: tuple[int, ...]
    obj: float | None
    lb: float
    gap_percent: float
    nodes: int
    status: Status
    wall_time_s: float
    screening: ScreeningResult | None = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "incumbent": self.incumbent.to_dict() if self.incumbent is not None else None,
            "support": list(self.support),
            "obj": self.obj,
            "lb": self.lb,
            "gap_percent": self.gap_percent,
            "nodes": self.nodes,
            "status": self.status.value,
            "wall_time_s": self.wall_time_s,
        }


def gap_percent(obj: float | None, lb: float) -> float:
    """``100 * (obj - lb) / obj``; 100 without a feasible solution, floored at 0."""
    if obj is None or not math.isfinite(obj):
        return 100.0
    if lb > obj:
        if lb - obj > DEFAULT_SLACK * (1.0 + abs(obj)):
            log.warning("lower bound %.12g exceeds objective %.12g; gap clamped to 0", lb, obj)
        return 0.0
    if obj == lb:
        return 0.0
    return 100.0 * (obj - lb) / obj


def branching_variable(z, free, lam2=None) -> int:
    """Free index whose relaxed indicator is most fractional.

    Ties are broken by larger ``lam2`` and then by lower index.
    """
    z = np.asarray(z, dtype=float)
    free = np.asarray(free, dtype=int)
    zf = z[free]
    frac = (zf > INT_TOL) & (zf < 1.0 - INT_TOL)
    if not frac.any():
        raise NoFractional("all free indicators are integral")
    cand = free[frac]
    score = z[cand] * (1.0 - z[cand])
    sec = np.zeros(cand.size) if lam2 is None else np.asarray(lam2, dtype=float)[cand]
    # lexsort: last key is primary
    order = np.lexsort((cand, -sec, -score))
    return int(cand[order[0]])


def _n_supports(m: int, k: int) -> int:
    return sum(math.comb(m, i) for i in range(0, min(k, m) + 1))


def enumerate_supports(d: Dataset, gamma: float, k: int, guard: int = EXHAUSTIVE_GUARD):
    """Objective of every support of size at most ``k``: list of ``(support, objective, fit)``."""
    total = _n_supports(d.m, k)
    if total > guard:
        raise TooLarge(f"{total} supports exceed the guard of {guard}")
    out = []
    for size in range(0, min(k, d.m) + 1):
        for supp in itertools.combinations(range(d.m), size):
            fit = solve_restricted(supp, d, gamma)
            out.append((supp, fit.objective, fit))
    return out


def exhaustive_solve(d: Dataset, gamma: float, k: int, guard: int = EXHAUSTIVE_GUARD) -> SolveReport:
    """Brute-force optimum over all supports of size at most ``k`` (test oracle)."""
    t0 = time.perf_counter()
    rows = enumerate_supports(d, gamma, k, guard)
    supp, obj, fit = min(rows, key=lambda r: (r[1], r[0]))
    return SolveReport(
        incumbent=fit.coef, support=supp, obj=obj, lb=obj, gap_percent=0.0,
        nodes=len(rows), status=Status.OPTIMAL, wall_time_s=time.perf_counter() - t0,
    )


class _Incumbent:
    def __init__(self):
        self.obj = math.inf
        self.coef = None
        self.support = ()
        self._seen = {}

    def offer(self, support, d, gamma):
        support = tuple(sorted(support))
        if support in self._seen:
            return self._seen[support]
        fit = solve_restricted(support, d, gamma)
        self._seen[support] = fit.objective
        self.consider(fit.objective, fit.coef, support)
        return fit.objective

    def consider(self, obj, coef, support):
        support = tuple(sorted(support))
        self._seen.setdefault(support, obj)
        if obj < self.obj or (obj == self.obj and support < self.support):
            self.obj, self.coef, self.support = obj, coef, support


def branch_and_bound(d: Dataset, gamma: float, k: int, *, time_limit_s: float | None = None,
                     node_limit: int | None = None, gap_tol_rel: float = 1e-6,
                     screen_first: bool = True, node_screening: bool = False,
                     root_tol: float = 1e-8, node_tol: float = 1e-6) -> SolveReport:
    """Solve the cardinality-constrained problem exactly (up to ``gap_tol_rel``).

    Nodes carry fixings of the indicators; each node is bounded by the
    certified dual bound of its perspective relaxation. Exploration is
    best-first (lowest bound, then deeper, then older). The time limit is
    checked between node evaluations and inside relaxation solves.
    """
    if not 1 <= k:
        raise ValueError("k must be >= 1")
    t_start = time.perf_counter()
    deadline = None if time_limit_s is None else time.monotonic() + time_limit_s
    inc = _Incumbent()
    history = []

    def fathom_level():
        return inc.obj - max(gap_tol_rel * abs(inc.obj), 1e-12)

    def finish(lb, nodes, status, screening=None):
        lb = min(lb, inc.obj)
        obj = inc.obj if inc.coef is not None else None
        lb_eff = max(lb, 0.0)  # the objective is a sum of non-negative terms
        return SolveReport(
            incumbent=inc.coef, support=inc.support, obj=obj, lb=lb,
            gap_percent=gap_percent(obj, lb_eff), nodes=nodes, status=status,
            wall_time_s=time.perf_counter() - t_start, screening=screening, history=history,
        )

    if k >= d.m:
        fit = solve_restricted(range(d.m), d, gamma)
        inc.consider(fit.objective, fit.coef, range(d.m))
        history.append((0, inc.obj, inc.obj))
        return finish(inc.obj, 0, Status.OPTIMAL)

    floor = -math.inf
    root_f0, root_f1 = (), ()
    w_root = None
    screening = None
    if screen_first:
        screening = safe_screen(d, gamma, k, tol_rel=root_tol)
        inc.consider(screening.ub, screening.incumbent, screening.greedy_support)
        floor = screening.v_lower
        root_f0, root_f1 = screening.fixed0, screening.fixed1
        w_root = screening.relaxation.w_star

    counter = itertools.count()
    nodes_evaluated = 0
    closed_lb = math.inf  # smallest bound among nodes closed by bound or integrality

    def evaluate(f0, f1, parent_bound, w0, depth, tol):
        """Bound a node, try heuristics, and return (bound, z, lam2, w, free) or None if closed."""
        nonlocal closed_lb
        cutoff = fathom_level() if inc.coef is not None else None
        sol = solve_relaxation(d, gamma, k, f0, f1, tol_rel=tol, w0=w0,
                               cutoff=cutoff, deadline=deadline)
        cert = recover_dual(sol, d, gamma)
        slack = cert.slack_applied
        bound = max(parent_bound, cert.v_lower, sol.lower_bound - slack, floor)
        inc.offer(greedy_support(cert), d, gamma)
        blocked = set(f0) | set(f1)
        free = np.array([j for j in range(d.m) if j not in blocked], dtype=int)
        z = sol.z_star
        if free.size:
            zf = z[free]
            integral = bool(np.all((zf <= INT_TOL) | (zf >= 1.0 - INT_TOL)))
        else:
            integral = True
        if integral:
            supp = set(f1) | {int(j) for j in free[z[free] >= 1.0 - INT_TOL]}
            if len(supp) <= k:
                val = inc.offer(supp, d, gamma)
                if free.size == 0:
                    # the fixing leaves a single completion, fitted exactly
                    closed_lb = min(closed_lb, val)
                    return None
                if bound < fathom_level() and tol > 1e-10 and sol.solver_stats.status != "deadline":
                    return evaluate(f0, f1, parent_bound, sol.w_star, depth, 1e-11)
                closed_lb = min(closed_lb, bound, val)
                return None
        if inc.coef is not None and bound >= fathom_level():
            closed_lb = min(closed_lb, bound)
            return None
        if node_screening:
            nf0, nf1 = apply_screening_rules(cert, inc.obj, gamma)
            if nf0 or nf1:
                f0 = tuple(sorted(set(f0) | set(nf0)))
                f1 = tuple(sorted(set(f1) | set(nf1)))
                blocked = set(f0) | set(f1)
                free = np.array([j for j in range(d.m) if j not in blocked], dtype=int)
        return bound, z, cert.lambda_bar ** 2, sol.w_star, f0, f1, free

    heap = []

    def push(f0, f1, res, depth):
        bound, z, lam2, w, f0, f1, free = res
        nid = next(counter)
        heapq.heappush(heap, (bound, -depth, nid, Node(f0, f1, bound, depth, nid), z, lam2, w, free))

    root = evaluate(root_f0, root_f1, -math.inf, w_root, 0, root_tol)
    if root is not None:
        push(root_f0, root_f1, root, 0)
    global_lb = min(heap[0][0] if heap else math.inf, closed_lb)
    history.append((0, inc.obj, min(global_lb, inc.obj)))

    status = Status.OPTIMAL
    while heap:
        top_bound = heap[0][0]
        global_lb = min(top_bound, closed_lb)
        if inc.coef is not None and top_bound >= fathom_level():
            closed_lb = min(closed_lb, top_bound)
            heap.clear()
            break
        if deadline is not None and time.monotonic() >= deadline:
            status = Status.TIME_LIMIT
            break
        if node_limit is not None and nodes_evaluated >= node_limit:
            status = Status.NODE_LIMIT
            break
        bound, _, _, node, z, lam2, w, free = heapq.heappop(heap)
        try:
            j = branching_variable(z, free, lam2)
        except NoFractional:
            supp = set(node.fixed1) | {int(i) for i in free[z[free] >= 1.0 - INT_TOL]}
            if len(supp) <= k:
                inc.offer(supp, d, gamma)
            closed_lb = min(closed_lb, bound)
            continue
        children = (
            (node.fixed0, tuple(sorted(node.fixed1 + (j,)))),
            (tuple(sorted(node.fixed0 + (j,))), node.fixed1),
        )
        for f0, f1 in children:
            if len(f1) > k:
                continue
            if node_limit is not None and nodes_evaluated >= node_limit:
                heapq.heappush(heap, (bound, -node.depth, node.node_id, node, z, lam2, w, free))
                break
            res = evaluate(f0, f1, bound, w, node.depth + 1, node_tol)
            nodes_evaluated += 1
            if res is not None:
                push(f0, f1, res, node.depth + 1)
            if deadline is not None and time.monotonic() >= deadline:
                break
        open_min = heap[0][0] if heap else math.inf
        history.append((nodes_evaluated, inc.obj, min(open_min, closed_lb, inc.obj)))

    open_min = heap[0][0] if heap else math.inf
    lb = min(open_min, closed_lb)
    if not heap:
        lb = min(closed_lb, inc.obj)
    if status is not Status.OPTIMAL:
        obj = inc.obj
        if inc.coef is not None and obj - lb <= gap_tol_rel * abs(obj):
            status = Status.OPTIMAL
    report = finish(lb, nodes_evaluated, status, screening)
    history.append((nodes_evaluated, report.obj, report.lb))
    return report
