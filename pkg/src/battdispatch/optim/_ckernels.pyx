# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex inner-loop kernels.  See _pykernels.py for the contract."""
from libc.math cimport fabs, INFINITY, isfinite

DEF BASIC = 0
DEF AT_LOWER = 1
DEF AT_UPPER = 2
DEF FREE_ZERO = 3


def price(const double[::1] d, const signed char[::1] status, double tol, bint bland):
    cdef Py_ssize_t j, n = d.shape[0], best = -1
    cdef double dj, score, best_score = 0.0
    cdef signed char st
    cdef bint elig
    for j in range(n):
        st = status[j]
        dj = d[j]
        # branch-free eligibility; statuses are unpredictable to the CPU
        elig = ((st == AT_LOWER) & (dj < -tol)) | ((st == AT_UPPER) & (dj > tol)) | \
            ((st == FREE_ZERO) & (fabs(dj) > tol))
        if bland and elig:
            return j
        score = fabs(dj) * elig
        if score > best_score:
            best_score = score
            best = j
    return best


def ratio_test(const double[::1] x_b, const double[::1] lo_b, const double[::1] up_b,
               const double[::1] alpha, double direction, double tol, double pivot_tol,
               const long[::1] head, bint bland):
    cdef Py_ssize_t i, m = x_b.shape[0], r = -1
    cdef double rate, x, lo, up, ex, rel, theta_max = INFINITY, best_rate = -1.0
    cdef double best_exact = INFINITY
    cdef bint up_flag, best_up = False
    cdef long best_head = 0

    # pass 1: relaxed bound (or exact minimum under Bland)
    for i in range(m):
        rate = -direction * alpha[i]
        if fabs(rate) <= pivot_tol:
            continue
        x = x_b[i]; lo = lo_b[i]; up = up_b[i]
        if rate < 0:
            if x < lo - tol:
                continue
            elif x > up + tol:
                ex = (x - up) / -rate
                rel = ex
                up_flag = True
            elif isfinite(lo):
                ex = (x - lo) / -rate
                rel = (x - lo + tol) / -rate
                up_flag = False
            else:
                continue
        else:
            if x > up + tol:
                continue
            elif x < lo - tol:
                ex = (lo - x) / rate
                rel = ex
                up_flag = False
            elif isfinite(up):
                ex = (up - x) / rate
                rel = (up - x + tol) / rate
                up_flag = True
            else:
                continue
        if ex < 0:
            ex = 0.0
        if bland:
            if ex < best_exact or (ex == best_exact and head[i] < best_head):
                best_exact = ex
                best_head = head[i]
                r = i
                best_up = up_flag
        elif rel < theta_max:
            theta_max = rel

    if bland:
        if r < 0:
            return -1, INFINITY, False
        return r, best_exact, best_up
    if not isfinite(theta_max):
        return -1, INFINITY, False

    # pass 2: largest pivot among candidates within the relaxed bound
    for i in range(m):
        rate = -direction * alpha[i]
        if fabs(rate) <= pivot_tol:
            continue
        x = x_b[i]; lo = lo_b[i]; up = up_b[i]
        if rate < 0:
            if x < lo - tol:
                continue
            elif x > up + tol:
                ex = (x - up) / -rate
                up_flag = True
            elif isfinite(lo):
                ex = (x - lo) / -rate
                up_flag = False
            else:
                continue
        else:
            if x > up + tol:
                continue
            elif x < lo - tol:
                ex = (lo - x) / rate
                up_flag = False
            elif isfinite(up):
                ex = (up - x) / rate
                up_flag = True
            else:
                continue
        if ex < 0:
            ex = 0.0
        if ex <= theta_max and fabs(rate) > best_rate:
            best_rate = fabs(rate)
            best_exact = ex
            best_up = up_flag
            r = i
    return r, best_exact, best_up


def ftran_etas(double[::1] z, Py_ssize_t n_etas, const long[::1] rows, const double[::1] pivots,
               const long[::1] starts, const long[::1] idx, const double[::1] vals):
    cdef Py_ssize_t k, p, r
    cdef double zr
    for k in range(n_etas):
        r = rows[k]
        zr = z[r]
        if zr == 0.0:
            continue
        for p in range(starts[k], starts[k + 1]):
            z[idx[p]] += vals[p] * zr
        z[r] = pivots[k] * zr


def btran_etas(double[::1] c, Py_ssize_t n_etas, const long[::1] rows, const double[::1] pivots,
               const long[::1] starts, const long[::1] idx, const double[::1] vals):
    cdef Py_ssize_t k, p, r
    cdef double acc
    for k in range(n_etas - 1, -1, -1):
        r = rows[k]
        acc = pivots[k] * c[r]
        for p in range(starts[k], starts[k + 1]):
            acc += vals[p] * c[idx[p]]
        c[r] = acc
