"""Pure numpy versions of the simplex inner-loop kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``BATTDISPATCH_PURE_PYTHON`` is set.  Signatures and results match the
compiled module exactly, including tie-breaking.
"""
import numpy as np

BASIC = 0
AT_LOWER = 1
AT_UPPER = 2
FREE_ZERO = 3
FIXED = 4


def price(d, status, tol, bland):
    """Entering column: largest |d| among improving candidates, or the
    lowest-index candidate under Bland's rule.  Returns -1 at optimality."""
    elig = ((status == AT_LOWER) & (d < -tol)) | ((status == AT_UPPER) & (d > tol)) | (
        (status == FREE_ZERO) & (np.abs(d) > tol)
    )
    idx = np.flatnonzero(elig)
    if idx.size == 0:
        return -1
    if bland:
        return int(idx[0])
    return int(idx[np.argmax(np.abs(d[idx]))])


def ratio_test(x_b, lo_b, up_b, alpha, direction, tol, pivot_tol, head, bland):
    """Bounded ratio test for an entering column moving in ``direction``.

    Basic variable i changes at rate ``-direction * alpha[i]``.  Feasible
    basics block at the bound they approach; infeasible basics block when they
    reach the bound they violate, and never otherwise.  Harris' two-pass rule
    picks the largest pivot among near-ties; with ``bland`` set the exact
    minimum ratio is used, ties broken by the lowest basic column index.

    Returns ``(row, theta, to_upper)``; row is -1 when nothing blocks.
    """
    rate = -direction * alpha
    big = np.abs(rate) > pivot_tol
    dec = big & (rate < 0)
    inc = big & (rate > 0)
    below = x_b < lo_b - tol
    above = x_b > up_b + tol
    feas = ~below & ~above

    m = x_b.shape[0]
    exact = np.full(m, np.inf)
    relaxed = np.full(m, np.inf)
    to_up = np.zeros(m, dtype=bool)

    with np.errstate(invalid="ignore", divide="ignore"):
        # decreasing, feasible: stops at lower bound
        sel = dec & feas & np.isfinite(lo_b)
        exact[sel] = (x_b[sel] - lo_b[sel]) / -rate[sel]
        relaxed[sel] = (x_b[sel] - lo_b[sel] + tol) / -rate[sel]
        # decreasing, above upper: becomes feasible at upper bound
        sel = dec & above
        exact[sel] = (x_b[sel] - up_b[sel]) / -rate[sel]
        relaxed[sel] = exact[sel]
        to_up[sel] = True
        # increasing, feasible: stops at upper bound
        sel = inc & feas & np.isfinite(up_b)
        exact[sel] = (up_b[sel] - x_b[sel]) / rate[sel]
        relaxed[sel] = (up_b[sel] - x_b[sel] + tol) / rate[sel]
        to_up[sel] = True
        # increasing, below lower: becomes feasible at lower bound
        sel = inc & below
        exact[sel] = (lo_b[sel] - x_b[sel]) / rate[sel]
        relaxed[sel] = exact[sel]

    np.maximum(exact, 0.0, out=exact)
    if bland:
        theta = exact.min(initial=np.inf)
        if not np.isfinite(theta):
            return -1, np.inf, False
        ties = np.flatnonzero(exact <= theta)
        r = int(ties[np.argmin(head[ties])])
        return r, float(exact[r]), bool(to_up[r])

    theta_max = relaxed.min(initial=np.inf)
    if not np.isfinite(theta_max):
        return -1, np.inf, False
    cand = np.flatnonzero(exact <= theta_max)
    r = int(cand[np.argmax(np.abs(rate[cand]))])
    return r, float(exact[r]), bool(to_up[r])


def ftran_etas(z, n_etas, rows, pivots, starts, idx, vals):
    """Apply eta transformations E_1 .. E_k to z in place."""
    for k in range(n_etas):
        r = rows[k]
        zr = z[r]
        if zr == 0.0:
            continue
        s, e = starts[k], starts[k + 1]
        z[idx[s:e]] += vals[s:e] * zr
        z[r] = pivots[k] * zr


def btran_etas(c, n_etas, rows, pivots, starts, idx, vals):
    """Apply transposed eta transformations E_k^T .. E_1^T to c in place."""
    for k in range(n_etas - 1, -1, -1):
        r = rows[k]
        s, e = starts[k], starts[k + 1]
        c[r] = pivots[k] * c[r] + np.dot(vals[s:e], c[idx[s:e]])
