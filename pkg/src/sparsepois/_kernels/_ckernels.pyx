# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner-loop kernels. Semantics match ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs, INFINITY
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

BACKEND = "cython"


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<double*>a)[0]
    cdef double y = (<double*>b)[0]
    if x < y:
        return 1
    if x > y:
        return -1
    return 0


def poisson_terms(const double[::1] eta, const double[::1] y, double cap):
    cdef Py_ssize_t i, n = eta.shape[0]
    cdef double total = 0.0, mu
    for i in range(n):
        if eta[i] > cap:
            return INFINITY, None
    resid = np.empty(n)
    cdef double[::1] r = resid
    with nogil:
        for i in range(n):
            mu = exp(eta[i])
            total += mu - y[i] * eta[i]
            r[i] = mu - y[i]
    return total, resid


cdef void _select_top(double* s, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    """Partially reorder ``s`` so that its ``k`` largest entries occupy ``s[:k]``."""
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j
    cdef double pivot, tmp
    while lo < hi:
        pivot = s[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while s[i] > pivot:
                i += 1
            while s[j] < pivot:
                j -= 1
            if i <= j:
                tmp = s[i]
                s[i] = s[j]
                s[j] = tmp
                i += 1
                j -= 1
        if k - 1 <= j:
            hi = j
        elif k - 1 >= i:
            lo = i
        else:
            return


def waterfill_theta(const double[::1] mag, Py_ssize_t k):
    cdef Py_ssize_t i, r, n = mag.shape[0], nnz = 0
    cdef double tail = 0.0, theta = 0.0
    cdef double* s
    for i in range(n):
        if mag[i] != 0.0:
            nnz += 1
    if nnz <= k:
        return 0.0
    s = <double*>malloc(n * sizeof(double))
    if s == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                s[i] = mag[i]
                tail += s[i]
            _select_top(s, n, k)
            qsort(s, k, sizeof(double), _cmp_desc)
            for r in range(k):
                theta = tail / (k - r)
                if s[r] <= theta:
                    break
                tail -= s[r]
        return theta
    finally:
        free(s)


cdef double _clip_sum(const double[::1] a, double c, double tt) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v, f = 0.0
    for i in range(a.shape[0]):
        v = c * a[i] - tt
        if v >= 1.0:
            f += 1.0
        elif v > 0.0:
            f += v
    return f


def persp_prox(const double[::1] u, double t, Py_ssize_t budget):
    cdef Py_ssize_t i, n = u.shape[0], nnz = 0, n1, nact
    cdef double tt = 2.0 * t, amax = 0.0, lo, hi, mid, c, v, sa, fmid, cand
    x_arr = np.zeros(n)
    z_arr = np.zeros(n)
    cdef double[::1] x = x_arr
    cdef double[::1] z = z_arr
    if budget <= 0 or n == 0:
        return x_arr, z_arr
    a_arr = np.abs(np.asarray(u))
    cdef double[::1] a = a_arr
    for i in range(n):
        if a[i] != 0.0:
            nnz += 1
        if a[i] > amax:
            amax = a[i]
    if nnz <= budget:
        for i in range(n):
            if a[i] > 0.0:
                z[i] = 1.0
            x[i] = u[i] / (1.0 + tt)
        return x_arr, z_arr
    lo = tt / amax
    hi = (1.0 + tt) / np.partition(a_arr, n - budget)[n - budget]
    c = hi
    with nogil:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            n1 = 0
            nact = 0
            sa = 0.0
            fmid = 0.0
            for i in range(n):
                v = mid * a[i] - tt
                if v >= 1.0:
                    n1 += 1
                elif v > 0.0:
                    nact += 1
                    sa += a[i]
                    fmid += v
            fmid += n1
            if sa > 0.0:
                cand = (budget - n1 + tt * nact) / sa
                if fabs(_clip_sum(a, cand, tt) - budget) <= 1e-13 * budget:
                    c = cand
                    break
            if fmid < budget:
                lo = mid
            else:
                hi = mid
            c = hi
            if hi - lo <= 1e-16 * hi:
                break
        for i in range(n):
            v = c * a[i] - tt
            if v >= 1.0:
                v = 1.0
            elif v < 0.0:
                v = 0.0
            z[i] = v
            x[i] = u[i] * v / (v + tt)
    return x_arr, z_arr


def rh_prox(const double[::1] u, double t, double nu):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double r = sqrt(nu), a, thr = 2.0 * t * r, edge = (1.0 + 2.0 * t) * r
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            a = fabs(u[i])
            if a <= edge:
                if a <= thr:
                    o[i] = 0.0
                elif u[i] > 0:
                    o[i] = a - thr
                else:
                    o[i] = thr - a
            else:
                o[i] = u[i] / (1.0 + 2.0 * t)
    return out


def ar1_fill(const double[:, ::1] eps, double rho):
    cdef Py_ssize_t i, j, n = eps.shape[0], m = eps.shape[1]
    cdef double s = sqrt(1.0 - rho * rho)
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            o[i, 0] = eps[i, 0]
            for j in range(1, m):
                o[i, j] = rho * o[i, j - 1] + s * eps[i, j]
    return out
