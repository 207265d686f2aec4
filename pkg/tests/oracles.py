"""Independent reference computations used by the tests.

None of these call the package's solvers: they use scipy optimizers, grids
and textbook iterations on the raw arrays.
"""
import itertools
import math

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import gammaln


def log_fact_mean(y):
    return float(np.mean(gammaln(np.asarray(y, dtype=float) + 1.0)))


def poisson_value(x, y, w, b):
    eta = x @ w + b
    return float(np.mean(np.exp(eta) - y * eta)) + log_fact_mean(y)


def scalar_intercept(x, y, w):
    """Safeguarded Newton on ``b -> L(w, b)`` (derivative is monotone in b)."""
    eta = x @ w
    ybar = float(np.mean(y))
    lo, hi = -50.0 - eta.max(), 50.0 - eta.min()
    b = 0.0
    for _ in range(200):
        mu = np.exp(eta + b)
        g = float(np.mean(mu)) - ybar
        if g > 0:
            hi = b
        else:
            lo = b
        h = float(np.mean(mu))
        nb = b - g / h
        if not lo < nb < hi:
            nb = 0.5 * (lo + hi)
        if abs(nb - b) <= 1e-15 * max(1.0, abs(b)):
            b = nb
            break
        b = nb
    return b


def irls_mle(x, y, iters=100):
    """Unregularized Poisson MLE with intercept by iteratively reweighted least squares."""
    n, m = x.shape
    a = np.hstack([x, np.ones((n, 1))])
    beta = np.zeros(m + 1)
    beta[-1] = math.log(np.mean(y))
    for _ in range(iters):
        eta = a @ beta
        mu = np.exp(eta)
        z = eta + (y - mu) / mu
        wa = a * mu[:, None]
        new = np.linalg.solve(a.T @ wa, wa.T @ z)
        if np.max(np.abs(new - beta)) <= 1e-14 * max(1.0, np.max(np.abs(beta))):
            beta = new
            break
        beta = new
    return beta[:-1], beta[-1]


def ridge_fit_scipy(x, y, gamma, support):
    """Restricted ridge-Poisson fit with BFGS; returns the objective value."""
    support = list(support)
    xs = x[:, support]
    p = len(support)
    lf = log_fact_mean(y)

    def f(th):
        w, b = th[:p], th[p]
        eta = xs @ w + b
        mu = np.exp(eta)
        val = float(np.mean(mu - y * eta)) + lf + float(w @ w) / gamma
        r = (mu - y) / len(y)
        g = np.empty(p + 1)
        g[:p] = xs.T @ r + 2.0 * w / gamma
        g[p] = r.sum()
        return val, g

    th0 = np.zeros(p + 1)
    th0[-1] = math.log(np.mean(y))
    res = minimize(f, th0, jac=True, method="BFGS", options={"gtol": 1e-11, "maxiter": 10000})
    return float(res.fun)


def exhaustive_optimum(x, y, gamma, k):
    """``(value, [(support, value), ...])`` over all supports of size <= k via BFGS fits."""
    m = x.shape[1]
    rows = []
    for size in range(0, k + 1):
        for s in itertools.combinations(range(m), size):
            rows.append((s, ridge_fit_scipy(x, y, gamma, s)))
    return min(v for _, v in rows), rows


def _rh_inner(x, y, gamma, nu, free, one, start):
    """min L(w,b) + (1/gamma)[sum_one w^2 + sum_free rh(w, nu)] with w_free = p - q, p, q >= 0."""
    n = len(y)
    nf, no = len(free), len(one)
    xf, xo = x[:, free], x[:, one]
    r = math.sqrt(nu)
    lf = log_fact_mean(y)

    def unpack(v):
        return v[:nf], v[nf:2 * nf], v[2 * nf:2 * nf + no], v[-1]

    def f(v):
        p, q, wo, b = unpack(v)
        eta = xf @ (p - q) + xo @ wo + b
        mu = np.exp(eta)
        a = p + q
        lin = a <= r
        h = np.where(lin, 2.0 * r * a, a * a + nu)
        dh = np.where(lin, 2.0 * r, 2.0 * a)
        val = float(np.mean(mu - y * eta)) + lf + (float(wo @ wo) + float(h.sum())) / gamma
        res = (mu - y) / n
        gf = xf.T @ res
        g = np.concatenate([gf + dh / gamma, -gf + dh / gamma, xo.T @ res + 2.0 * wo / gamma, [res.sum()]])
        return val, g

    v0 = start if start is not None else np.concatenate([np.zeros(2 * nf + no), [math.log(np.mean(y))]])
    bounds = [(0.0, None)] * (2 * nf) + [(None, None)] * (no + 1)
    res = minimize(f, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 20000, "maxcor": 30})
    return float(res.fun), res.x


def relaxation_oracle(x, y, gamma, k, fixed0=(), fixed1=(), grid=40):
    """Perspective relaxation value by maximizing the concave dual function over nu.

    ``q(nu) = min_w [ ... reverse-Huber(nu) ... ] - nu * K / gamma``; a log grid
    locates the maximizer and bounded Brent refines it.
    """
    m = x.shape[1]
    f0, f1 = set(fixed0), set(fixed1)
    one = sorted(f1)
    free = [j for j in range(m) if j not in f0 and j not in f1]
    budget = k - len(one)
    if budget >= len(free):
        return _rh_inner(x, y, gamma, 0.0, [], one + free, None)[0]
    if budget == 0:
        return _rh_inner(x, y, gamma, 0.0, [], one, None)[0]

    cache = {}

    def q(nu):
        nu = max(nu, 0.0)
        if nu not in cache:
            val, _ = _rh_inner(x, y, gamma, nu, free, one, None)
            cache[nu] = val - nu * budget / gamma
        return cache[nu]

    nus = np.concatenate([[0.0], np.logspace(-8, 1, grid)])
    vals = [q(v) for v in nus]
    i = int(np.argmax(vals))
    lo = nus[max(i - 1, 0)]
    hi = nus[min(i + 1, len(nus) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda v: -q(v), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13 * max(hi, 1e-12), "maxiter": 500})
        return max(max(vals), -float(res.fun))
    return max(vals)


def bigm_grid_oracle(x, y, gamma, k, M, levels=8, pts=41):
    """Dense grid over ``{|w_j| <= M, |w|_1 <= k M}`` (m = 3), refined around the best point."""
    m = x.shape[1]
    assert m == 3
    yb = y.astype(float)
    lf = log_fact_mean(y)
    center = np.zeros(3)
    half = M
    best = math.inf
    for _ in range(levels):
        axes = [np.linspace(c - half, c + half, pts) for c in center]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        ok = (np.abs(g) <= M + 1e-15).all(axis=1) & (np.abs(g).sum(axis=1) <= k * M + 1e-15)
        g = g[ok]
        eta = g @ x.T  # (points, n)
        # intercept profiled out in closed form
        b = np.log(yb.sum()) - np.log(np.exp(eta).sum(axis=1))
        etab = eta + b[:, None]
        vals = np.mean(np.exp(etab) - yb * etab, axis=1) + lf + (g * g).sum(axis=1) / gamma
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            center = g[i]
        half *= 4.0 / (pts - 1)
    return best


def waterfill_value(mag, z):
    mag = np.asarray(mag, dtype=float)
    z = np.asarray(z, dtype=float)
    out = 0.0
    for a, zz in zip(mag, z):
        if a == 0:
            continue
        out += math.inf if zz <= 0 else a * a / zz
    return out


def random_capped_simplex(rng, m, k, count):
    """Random points of ``{0 <= z <= 1, sum z <= k}`` (several shapes, incl. the boundary)."""
    out = []
    for i in range(count):
        z = rng.random(m) ** rng.uniform(0.2, 3.0)
        s = z.sum()
        if s > k:
            z = z * (k / s)
        if i % 3 == 0 and z.sum() < k:
            # push onto the budget face where possible
            slack = k - z.sum()
            room = 1.0 - z
            if room.sum() > 0:
                z = z + room * min(1.0, slack / room.sum())
        out.append(np.clip(z, 0.0, 1.0))
    return out
