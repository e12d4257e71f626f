"""Literal scalar re-implementations of the cell model, written from the
equations with plain ``math`` and no shared code with the package."""
import math

R = 8.314462618
F = 96485.33212


EPS = 1e-6  # molar fractions are kept off 0 and 1 so the log stays finite at soc 0 or 1


def chi_and(soc):
    return min(max(0.083 + 0.917 * soc, EPS), 1 - EPS)


def chi_ctd(soc):
    return min(max(1 - 0.7 * soc, EPS), 1 - EPS)


def v_int_electrode(chi, A):
    # term k: (2x-1)^k - 2x(k-1)(1-x) / (2x-1)^(2-k), summed, then J/mol -> V
    s = 0.0
    for k in range(1, 8):
        s += A[k - 1] * ((2 * chi - 1) ** k - 2 * chi * (k - 1) * (1 - chi) / (2 * chi - 1) ** (2 - k))
    return s / F


def v_eq(soc, T, p):
    ca, cc = chi_and(soc), chi_ctd(soc)
    nernst = R * T / F * math.log((1 - cc) * ca / (cc * (1 - ca)))
    return p.U_bat0 + nernst + v_int_electrode(cc, p.A_ctd) - v_int_electrode(ca, p.A_and)


def r_ohm(soc, T, p):
    return p.R_ohm_0 + p.R_ohm_T * T + p.R_ohm_SOC * soc


def r_ct(soc, T, p):
    ea = p.E_A * 1000.0
    return (R * T * math.exp(ea / (R * T)) / (F ** 2 * p.A_SEI * p.k_0)) / math.sqrt(chi_and(soc) * chi_ctd(soc))


def r_mem(T, p):
    return p.K_dif_mem * math.exp(p.b_dif_mem / (T - p.T0_dif_mem))


def r_elec(T, p):
    return p.K_dif_elec * math.exp(p.b_dif_elec / (T - p.T0_dif_elec))


def r_total(soc, T, p):
    return r_ohm(soc, T, p) + r_ct(soc, T, p) + r_mem(T, p)


def eta_c(i, T, p):
    return p.eta_c0 + p.eta_cT * T + p.eta_ci * i


def soc_surface(soc, i, T, p):
    # i signed: > 0 discharge
    return soc - r_elec(T, p) * i * eta_c(abs(i), T, p)


# -- linear programming -------------------------------------------------------

def _as_inequalities(A, senses, rhs, lb, ub):
    """Stack rows and finite bounds as G x <= h."""
    import numpy as np

    G, h = [], []
    for a, s, b in zip(A, senses, rhs):
        if s in ("<=", "="):
            G.append(a)
            h.append(b)
        if s in (">=", "="):
            G.append(-np.asarray(a, float))
            h.append(-b)
    n = len(lb)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if math.isfinite(ub[j]):
            G.append(e)
            h.append(ub[j])
        if math.isfinite(lb[j]):
            G.append(-e)
            h.append(-lb[j])
    return np.array(G, float).reshape(-1, n), np.array(h, float)


def vertex_enumeration(c, A, senses, rhs, lb, ub, tol=1e-9):
    """Minimum of c x over a bounded polytope by trying every basis.

    Returns ``(objective, x)`` or ``(None, None)`` when no vertex is feasible.
    Only valid when all bounds are finite (so an optimal vertex exists).
    """
    import itertools

    import numpy as np

    c = np.asarray(c, float)
    n = c.size
    if n == 0:
        return 0.0, np.zeros(0)
    G, h = _as_inequalities(A, senses, rhs, lb, ub)
    best, best_x = None, None
    for rows in itertools.combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + tol * (1 + np.abs(h))):
            val = float(c @ x)
            if best is None or val < best - 1e-12:
                best, best_x = val, x
    return best, best_x
