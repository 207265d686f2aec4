"""Numpy implementations of the inner-loop kernels.

These mirror ``_ckernels.pyx`` one for one and are used when the compiled
module is unavailable or ``SPARSEPOIS_PURE_PYTHON=1`` is set.
"""
import numpy as np
from scipy.signal import lfilter

BACKEND = "python"


def poisson_terms(eta, y, cap):
    """Return ``(sum(exp(eta) - y*eta), exp(eta) - y)``.

    The sum is ``inf`` (and the residual ``None``) when ``max(eta) > cap``.
    """
    if eta.size and eta.max() > cap:
        return np.inf, None
    mu = np.exp(eta)
    return float(np.sum(mu - y * eta)), mu - y


def waterfill_theta(mag, k):
    """Threshold of the capped-simplex water-filling for ``sum(z) <= k``.

    Returns 0.0 when at most ``k`` entries of ``mag`` are nonzero.
    """
    nnz = np.count_nonzero(mag)
    if nnz <= k:
        return 0.0
    s = np.sort(mag)[::-1]
    tail = np.cumsum(s[::-1])[::-1]  # tail[r] = sum(s[r:])
    r = np.arange(k)
    theta = tail[:k] / (k - r)
    ok = np.nonzero(s[:k] <= theta)[0]
    return float(theta[ok[0]])


def persp_prox(u, t, budget):
    """Prox of ``t * min_z sum(x_j**2 / z_j)`` over ``{0 <= z <= 1, sum z <= budget}``.

    Returns ``(x, z)`` where ``z`` is the minimizing relaxed indicator.
    """
    a = np.abs(u)
    n = a.size
    if budget <= 0 or n == 0:
        return np.zeros(n), np.zeros(n)
    nnz = np.count_nonzero(a)
    if nnz <= budget:
        z = (a > 0).astype(float)
        return u / (1.0 + 2.0 * t), z
    tt = 2.0 * t
    amax = a.max()
    # f(c) = sum(clip(c*a - 2t, 0, 1)) is nondecreasing piecewise linear
    lo = tt / amax
    hi = (1.0 + tt) / np.partition(a, n - budget)[n - budget]
    c = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v = mid * a - tt
        one = v >= 1.0
        act = (v > 0.0) & ~one
        n1 = np.count_nonzero(one)
        sa = a[act].sum()
        fmid = n1 + v[act].sum()
        if sa > 0:
            cand = (budget - n1 + tt * np.count_nonzero(act)) / sa
            vc = cand * a - tt
            fc = np.clip(vc, 0.0, 1.0).sum()
            if abs(fc - budget) <= 1e-13 * budget:
                c = cand
                break
        if fmid < budget:
            lo = mid
        else:
            hi = mid
        c = hi
        if hi - lo <= 1e-16 * hi:
            break
    z = np.clip(c * a - tt, 0.0, 1.0)
    return u * z / (z + tt), z


def rh_prox(u, t, nu):
    """Vectorized prox of ``t * reverse_huber(., nu)``."""
    a = np.abs(u)
    r = np.sqrt(nu)
    lin = np.sign(u) * np.maximum(a - 2.0 * t * r, 0.0)
    quad = u / (1.0 + 2.0 * t)
    return np.where(a <= (1.0 + 2.0 * t) * r, lin, quad)


def ar1_fill(eps, rho):
    """AR(1) recursion along rows: x[:,0] = e[:,0], x[:,j] = rho*x[:,j-1] + s*e[:,j]."""
    s = np.sqrt(1.0 - rho * rho)
    zi = ((1.0 - s) * eps[:, :1])
    out, _ = lfilter([s], [1.0, -rho], eps, axis=1, zi=zi)
    return np.ascontiguousarray(out)
