import itertools
import math

import numpy as np
import pytest

from conftest import make_instance, random_small
from oracles import exhaustive_optimum, ridge_fit_scipy
from sparsepois.bnb import (
    Status,
    branch_and_bound,
    branching_variable,
    enumerate_supports,
    exhaustive_solve,
    gap_percent,
)
from sparsepois.errors import NoFractional, TooLarge
from sparsepois.relax import recover_dual, solve_relaxation
from test_screen import dominant_instance


def test_gap_percent_examples(caplog):
    assert gap_percent(10.0, 9.0) == pytest.approx(10.0)
    assert gap_percent(3.5, 3.5) == 0.0
    assert gap_percent(None, 1.0) == 100.0
    assert gap_percent(math.inf, 1.0) == 100.0
    with caplog.at_level("WARNING"):
        assert gap_percent(1.0, 1.5) == 0.0
    assert "clamped" in caplog.text


def test_branching_variable_examples():
    assert branching_variable([1.0, 0.5, 0.0], [0, 1, 2]) == 1
    assert branching_variable([0.5, 0.5], [0, 1], lam2=[4.0, 9.0]) == 1
    assert branching_variable([0.5, 0.5], [0, 1], lam2=[9.0, 9.0]) == 0
    assert branching_variable([0.3, 0.5, 0.5], [0, 2]) == 2
    with pytest.raises(NoFractional):
        branching_variable([1.0, 0.0, 1.0 - 1e-12], [0, 1, 2])


def test_k_equals_m():
    d = make_instance(0, m=4, n=20)
    rep = branch_and_bound(d, 1.0, 4)
    assert rep.nodes == 0 and rep.status is Status.OPTIMAL and rep.gap_percent == 0.0
    assert rep.obj == pytest.approx(ridge_fit_scipy(d.x, d.yf, 1.0, range(4)), rel=1e-9)


def test_exhaustive_examples():
    d = make_instance(1, m=3, n=20)
    assert exhaustive_solve(d, 1.0, 3).obj == pytest.approx(
        ridge_fit_scipy(d.x, d.yf, 1.0, range(3)), rel=1e-9)
    d1 = make_instance(2, m=1, n=15, k_true=1)
    assert exhaustive_solve(d1, 1.0, 1).obj == pytest.approx(
        ridge_fit_scipy(d1.x, d1.yf, 1.0, [0]), rel=1e-9)
    d8 = make_instance(3, m=8, n=25)
    rows = enumerate_supports(d8, 1.0, 2)
    assert len(rows) == 37
    best = exhaustive_solve(d8, 1.0, 2)
    for supp, _, _ in rows:
        assert best.obj <= ridge_fit_scipy(d8.x, d8.yf, 1.0, supp) + 1e-9


def test_exhaustive_guard():
    d = make_instance(0, m=30, n=10)
    with pytest.raises(TooLarge):
        exhaustive_solve(d, 1.0, 15)


@pytest.mark.parametrize("seed", range(20))
def test_bnb_equals_exhaustive(seed):
    d = make_instance(seed, m=10, n=30, k_true=3)
    gamma = [0.1, 1.0, 10.0][seed % 3]
    rep = branch_and_bound(d, gamma, 3)
    v_star, _ = exhaustive_optimum(d.x, d.yf, gamma, 3)
    assert rep.status is Status.OPTIMAL
    assert rep.obj == pytest.approx(v_star, rel=1e-6)
    assert rep.lb <= rep.obj and rep.gap_percent <= 1e-4
    assert len(rep.support) <= 3 and rep.incumbent.support == tuple(
        j for j in rep.support if rep.incumbent.w[j] != 0)


@pytest.mark.parametrize("seed", range(10))
def test_screening_consistency(seed):
    d, gamma, k = random_small(seed)
    a = branch_and_bound(d, gamma, k, screen_first=True)
    b = branch_and_bound(d, gamma, k, screen_first=False)
    c = branch_and_bound(d, gamma, k, node_screening=True)
    assert b.obj == pytest.approx(a.obj, rel=1e-6)
    assert c.obj == pytest.approx(a.obj, rel=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_history_monotone(seed):
    d = make_instance(seed, m=12, n=30, k_true=3, sigma2=2.0)
    rep = branch_and_bound(d, 10.0, 3, screen_first=False)
    objs = [h[1] for h in rep.history]
    lbs = [h[2] for h in rep.history]
    assert all(b <= a for a, b in zip(objs, objs[1:]))
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(lbs, lbs[1:]))


@pytest.mark.parametrize("seed", range(5))
def test_node_bounds_valid_and_parent_child(seed):
    d = make_instance(seed, m=7, n=25, k_true=2)
    gamma, k = 1.0, 2
    rows = {s: v for s, v in exhaustive_optimum(d.x, d.yf, gamma, k)[1]}
    rng = np.random.default_rng(seed)
    for _ in range(6):
        j0, j1 = rng.choice(7, size=2, replace=False)
        for f0, f1 in (((), ()), ((int(j0),), ()), ((), (int(j1),)), ((int(j0),), (int(j1),))):
            sol = solve_relaxation(d, gamma, k, f0, f1, tol_rel=1e-6)
            parent = recover_dual(sol, d, gamma).v_lower
            best = min(v for s, v in rows.items() if set(f1) <= set(s) and not set(f0) & set(s))
            assert parent <= best + 1e-9
            free = [j for j in range(7) if j not in f0 and j not in f1]
            j = free[0]
            for c0, c1 in ((f0, tuple(sorted(f1 + (j,)))), (tuple(sorted(f0 + (j,))), f1)):
                if len(c1) > k:
                    continue
                exact = solve_relaxation(d, gamma, k, c0, c1, tol_rel=1e-11).value
                psol = solve_relaxation(d, gamma, k, f0, f1, tol_rel=1e-11).value
                assert exact >= psol - 1e-9


def test_all_fixed_by_screening_gives_zero_nodes():
    d = dominant_instance()
    rep = branch_and_bound(d, 1.0, 1)
    assert rep.nodes == 0 and rep.status is Status.OPTIMAL and rep.gap_percent == 0.0
    assert rep.support == (0,)


def test_limits_report_status():
    d = make_instance(11, m=40, n=30, k_true=5, sigma2=3.0)
    rep = branch_and_bound(d, 10.0, 5, node_limit=2, screen_first=False)
    assert rep.status in (Status.NODE_LIMIT, Status.OPTIMAL)
    if rep.status is Status.NODE_LIMIT:
        assert rep.nodes <= 2 and 0 <= rep.gap_percent <= 100
    rep = branch_and_bound(d, 10.0, 5, time_limit_s=0.0, screen_first=False)
    assert rep.status in (Status.TIME_LIMIT, Status.OPTIMAL)
    assert rep.obj is not None and rep.lb <= rep.obj
    out = rep.to_dict()
    assert set(out) == {"incumbent", "support", "obj", "lb", "gap_percent", "nodes", "status",
                        "wall_time_s"}


def test_incumbent_tie_break_is_lexicographic():
    x = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [2.0, 2.0, 1.0], [-1.0, -1.0, 0.5]])
    from sparsepois.dataset import Dataset
    d = Dataset(np.vstack([x, x]), np.array([2, 1, 5, 0, 2, 1, 5, 0]))
    rep = branch_and_bound(d, 1.0, 1)
    assert rep.support == (0,)
    assert exhaustive_solve(d, 1.0, 1).support == (0,)
