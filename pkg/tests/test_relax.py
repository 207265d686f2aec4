import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from oracles import (
    bigm_grid_oracle,
    exhaustive_optimum,
    irls_mle,
    poisson_value,
    random_capped_simplex,
    relaxation_oracle,
    waterfill_value,
)
from sparsepois.dataset import Dataset
from sparsepois.errors import DegenerateCounts, InfeasibleFixing
from sparsepois.loss import Coefficients, poisson_loss, solve_restricted
from sparsepois.relax import (
    RelaxationSolution,
    bigM_relaxation_bound,
    capped_simplex_waterfill,
    recover_dual,
    reverse_huber,
    reverse_huber_prox,
    rp_lambda_value,
    solve_relaxation,
)


# ---------------------------------------------------------------- water-filling

def test_waterfill_example_k1_against_grid():
    z, theta, value = capped_simplex_waterfill([2.0, 1.0, 0.0], 1)
    np.testing.assert_allclose(z, [2 / 3, 1 / 3, 0.0], rtol=1e-14)
    assert theta == pytest.approx(3.0)
    assert value == pytest.approx(9.0)
    g = np.linspace(1e-6, 1.0, 200_001)
    zz1, zz2 = np.meshgrid(g[::200], g[::200], indexing="ij")
    ok = zz1 + zz2 <= 1.0
    grid_min = np.min((4.0 / zz1 + 1.0 / zz2)[ok])
    face_min = np.min(4.0 / g[:-1] + 1.0 / (1.0 - g[:-1]))
    assert value <= min(grid_min, face_min) + 1e-12
    assert value == pytest.approx(face_min, abs=1e-6)


def test_waterfill_small_support_and_zeros():
    z, theta, value = capped_simplex_waterfill([2.0, 1.0, 0.0], 2)
    np.testing.assert_array_equal(z, [1.0, 1.0, 0.0])
    assert theta == 0.0 and value == pytest.approx(5.0)
    z, theta, value = capped_simplex_waterfill([0.0, 0.0], 1)
    np.testing.assert_array_equal(z, [0.0, 0.0])
    assert value == 0.0


def test_waterfill_rejects_bad_input():
    with pytest.raises(ValueError):
        capped_simplex_waterfill([1.0], 0)
    with pytest.raises(ValueError):
        capped_simplex_waterfill([-1.0, 1.0], 1)


def test_waterfill_optimality_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(2, 9))
        k = int(rng.integers(1, m + 1))
        mag = np.abs(rng.normal(size=m)) * (rng.random(m) < 0.85)
        z, theta, value = capped_simplex_waterfill(mag, k)
        assert z.sum() <= k + 1e-12
        assert value == pytest.approx(waterfill_value(mag, z), rel=1e-12, abs=1e-300)
        if theta > 0:
            np.testing.assert_allclose(z, np.minimum(1.0, mag / theta), rtol=1e-14)
        pts = np.array(random_capped_simplex(rng, m, k, 10_000))
        with np.errstate(divide="ignore"):
            vals = np.where(mag > 0, mag * mag / pts, 0.0).sum(axis=1)
        assert value <= vals.min() + 1e-12 * (1 + value)


@settings(max_examples=200, deadline=None)
@given(mag=st.lists(st.floats(0.0, 100.0), min_size=1, max_size=25), k=st.integers(1, 25))
def test_waterfill_perspective_lower_bound(mag, k):
    a = np.array(mag)
    _, _, value = capped_simplex_waterfill(a, k)
    sq = float(a @ a)
    assert value >= sq * (1 - 1e-12)
    if np.count_nonzero(a) <= k:
        assert value == pytest.approx(sq, rel=1e-12)
    elif a.max() >= 1e-100 and np.sort(a)[::-1][k] >= 1e-3 * a.max():
        # strict once squares are normal floats and the excess is representable
        assert value > sq * (1 + 1e-15)


# ---------------------------------------------------------------- reverse Huber

def test_reverse_huber_examples():
    assert reverse_huber(1.0, 4.0) == pytest.approx(4.0)
    assert reverse_huber(3.0, 4.0) == pytest.approx(13.0)
    assert reverse_huber(-2.5, 0.0) == pytest.approx(6.25)
    zg = np.linspace(1e-6, 1.0, 10_000)
    for w, nu, ref in ((1.0, 4.0, 4.0), (3.0, 4.0, 13.0)):
        assert np.min(w * w / zg + nu * zg) == pytest.approx(ref, abs=1e-6)


def test_reverse_huber_identity_random():
    rng = np.random.default_rng(1)
    zg = np.linspace(1e-4, 1.0, 10_000)
    for _ in range(100):
        w = float(rng.normal(scale=2.0))
        nu = float(rng.uniform(0, 5))
        ref = np.min(w * w / zg + nu * zg)
        assert reverse_huber(w, nu) == pytest.approx(ref, abs=1e-6 * max(1, ref) + 1e-6)


def test_reverse_huber_prox_grid_and_ridge_limit():
    rng = np.random.default_rng(2)
    grid = np.linspace(-8, 8, 320_001)
    for _ in range(60):
        u = float(rng.normal(scale=3.0))
        t = float(rng.uniform(0.05, 2.0))
        nu = float(rng.uniform(0.0, 4.0))
        x = reverse_huber_prox(u, t, nu)
        r = math.sqrt(nu)
        a = np.abs(grid)
        obj = 0.5 * (grid - u) ** 2 + t * np.where(a <= r, 2 * r * a, grid * grid + nu)
        fx = 0.5 * (x - u) ** 2 + t * reverse_huber(x, nu)
        assert fx <= obj.min() + 1e-9
        # objective at 10^3 perturbed points
        for p in x + rng.normal(scale=0.2, size=1000):
            assert fx <= 0.5 * (p - u) ** 2 + t * reverse_huber(p, nu) + 1e-12
    assert reverse_huber_prox(3.0, 0.5, 0.0) == pytest.approx(1.5)


def test_fenchel_inequality_random():
    rng = np.random.default_rng(3)
    w = rng.normal(scale=3, size=10_000)
    z = rng.uniform(1e-3, 1, size=10_000)
    lam = rng.normal(scale=3, size=10_000)
    assert np.all(w * w / z >= lam * w - lam * lam / 4 * z - 1e-9)


# ---------------------------------------------------------------- relaxation

def perspective_total(sol, gamma):
    w, z = sol.w_star, sol.z_star
    on = w != 0
    return float(np.sum(w[on] ** 2 / z[on])) / gamma


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_relaxation_matches_nu_oracle(seed, gamma):
    d = make_instance(seed, m=10, n=30, k_true=3)
    sol = solve_relaxation(d, gamma, 3)
    ref = relaxation_oracle(d.x, d.yf, gamma, 3)
    assert sol.value == pytest.approx(ref, rel=1e-6)
    assert sol.solver_stats.status == "converged"


@pytest.mark.parametrize("seed", range(4))
def test_relaxation_with_fixings_matches_oracle(seed):
    d = make_instance(seed, m=9, n=30, k_true=3)
    f0, f1 = (seed % 9, (seed + 4) % 9), ((seed + 2) % 9,)
    sol = solve_relaxation(d, 1.0, 3, f0, f1)
    assert sol.value == pytest.approx(relaxation_oracle(d.x, d.yf, 1.0, 3, f0, f1), rel=1e-6)
    assert np.all(sol.z_star[list(f0)] == 0.0) and np.all(sol.w_star[list(f0)] == 0.0)
    assert np.all(sol.z_star[list(f1)] == 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_relaxation_invariants_and_nu_route(seed):
    d = make_instance(seed, m=12, n=30, k_true=3)
    gamma = [0.1, 1.0, 10.0][seed % 3]
    sol = solve_relaxation(d, gamma, 3)
    assert sol.z_star.sum() <= 3 + 1e-9
    assert np.all((sol.z_star >= 0) & (sol.z_star <= 1))
    loss = poisson_loss(Coefficients(sol.w_star, sol.b_star), d).value
    assert sol.value == pytest.approx(loss + perspective_total(sol, gamma), rel=1e-9)
    assert sol.nu >= 0
    alt = solve_relaxation(d, gamma, 3, method="nu_bisection")
    assert alt.value == pytest.approx(sol.value, rel=1e-6)


def test_relaxation_vacuous_budget_is_ridge():
    d = make_instance(0, m=6, n=25)
    sol = solve_relaxation(d, 2.0, 6)
    fit = solve_restricted(range(6), d, 2.0)
    assert sol.value == pytest.approx(fit.objective, rel=1e-8)


def test_relaxation_all_fixed_to_zero():
    d = make_instance(1, m=5, n=20)
    sol = solve_relaxation(d, 1.0, 2, fixed0=range(5))
    assert np.all(sol.w_star == 0)
    ybar = d.yf.mean()
    assert sol.b_star == pytest.approx(math.log(ybar))
    assert sol.value == pytest.approx(poisson_value(d.x, d.yf, np.zeros(5), math.log(ybar)), rel=1e-14)


def test_relaxation_errors():
    d = make_instance(2, m=5, n=20)
    with pytest.raises(InfeasibleFixing):
        solve_relaxation(d, 1.0, 1, fixed1=(0, 1))
    with pytest.raises(ValueError):
        solve_relaxation(d, 1.0, 2, fixed0=(1,), fixed1=(1,))
    z = Dataset(d.x, np.zeros(d.n, dtype=int))
    with pytest.raises(DegenerateCounts):
        solve_relaxation(z, 1.0, 2)


# ---------------------------------------------------------------- dual recovery

def _point(d, w, k=1):
    m = d.m
    return RelaxationSolution(w_star=np.asarray(w, float), b_star=0.0, z_star=np.zeros(m),
                              value=math.nan, nu=0.0, k=k)


def test_recover_dual_hand_examples():
    d = Dataset(np.array([[1.0, 0.0]]), np.array([1]))
    cert = recover_dual(_point(d, [0.0, 0.0]), d, 1.0)
    assert cert.b_opt == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(cert.lambda_bar, [0.0, 0.0], atol=1e-15)
    d = Dataset(np.array([[1.0, 0.0]]), np.array([2]))
    cert = recover_dual(_point(d, [0.0, 0.0]), d, 2.0)
    assert cert.b_opt == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(cert.lambda_bar, [0.0, 0.0], atol=1e-14)
    # finite-difference check that grad_w [L + lambda.w/gamma] vanishes at (0, b_opt)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        f = lambda v: poisson_value(d.x, d.yf, v, cert.b_opt) + float(cert.lambda_bar @ v) / 2.0
        assert abs((f(e) - f(-e)) / (2 * h)) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_recover_dual_stationarity_and_theta(seed):
    d = make_instance(seed, m=10, n=30, k_true=3)
    gamma = 1.0
    sol = solve_relaxation(d, gamma, 3, tol_rel=1e-4)
    cert = recover_dual(sol, d, gamma)
    ev = poisson_loss(Coefficients(sol.w_star, cert.b_opt), d)
    resid = ev.grad_w + cert.lambda_bar / gamma
    assert np.max(np.abs(resid)) <= 1e-14 * max(1.0, np.max(np.abs(ev.grad_w)))
    assert abs(ev.grad_b) <= 1e-12
    assert np.all(np.diff(cert.theta) <= 0)
    assert cert.theta_k == cert.theta[2] and cert.theta_k1 == cert.theta[3]
    assert cert.v_lower == pytest.approx(cert.v_rp_lambda - 1e-9 * (1 + abs(cert.v_rp_lambda)), rel=1e-15)
    # any-point validity: even a loose solve gives a bound below the oracle value
    assert cert.v_lower <= relaxation_oracle(d.x, d.yf, gamma, 3) + 1e-12


def test_theta_k1_zero_when_budget_covers_all():
    d = make_instance(1, m=4, n=20)
    cert = recover_dual(solve_relaxation(d, 1.0, 4), d, 1.0)
    assert cert.theta_k1 == 0.0


# ---------------------------------------------------------------- RP(lambda)

def test_rp_lambda_zero_is_mle_value():
    d = make_instance(2, m=3, n=40)
    w, b = irls_mle(d.x, d.yf)
    assert rp_lambda_value(np.zeros(3), d, 1.0, 3) == pytest.approx(poisson_value(d.x, d.yf, w, b), rel=1e-10)


@pytest.mark.parametrize("seed", range(6))
def test_rp_lambda_strong_duality(seed):
    d = make_instance(seed, m=8, n=30, k_true=2)
    gamma = [0.1, 1.0, 10.0][seed % 3]
    sol = solve_relaxation(d, gamma, 2)
    cert = recover_dual(sol, d, gamma)
    val = rp_lambda_value(cert.lambda_bar, d, gamma, 2)
    assert val == pytest.approx(cert.v_rp_lambda, rel=1e-8)
    assert abs(sol.value - val) <= 1e-5 * abs(sol.value)


@pytest.mark.parametrize("seed", range(4))
def test_rp_lambda_random_is_lower_bound(seed):
    d = make_instance(seed, m=6, n=25, k_true=2)
    gamma, k = 1.0, 2
    v_star, _ = exhaustive_optimum(d.x, d.yf, gamma, k)
    rng = np.random.default_rng(seed)
    for _ in range(15):
        lam = rng.normal(scale=0.3, size=6)
        assert rp_lambda_value(lam, d, gamma, k) <= v_star + 1e-10


# ---------------------------------------------------------------- big-M

def test_bigm_huge_M_is_ridge():
    d = make_instance(3, m=5, n=25)
    fit = solve_restricted(range(5), d, 1.0)
    assert bigM_relaxation_bound(d, 1.0, 2, 1e9) == pytest.approx(fit.objective, rel=1e-7)


@pytest.mark.parametrize("M", [0.05, 0.2, 2.0])
@pytest.mark.parametrize("seed", range(3))
def test_bigm_matches_grid_oracle(seed, M):
    d = make_instance(seed, m=3, n=20, k_true=1)
    ref = bigm_grid_oracle(d.x, d.yf, 1.0, 1, M)
    val = bigM_relaxation_bound(d, 1.0, 1, M)
    assert val == pytest.approx(ref, abs=1e-4)
    assert val <= ref + 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_perspective_dominates_bigm_small(seed):
    d = make_instance(seed, m=10, n=30, k_true=3)
    gamma = [0.1, 1.0, 10.0][seed % 3]
    assert bigM_relaxation_bound(d, gamma, 3, 2.0) <= solve_relaxation(d, gamma, 3).value + 1e-8
