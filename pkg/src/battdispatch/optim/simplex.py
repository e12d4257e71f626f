"""Bounded-variable primal revised simplex.

Computational form: every row ``a_i x`` gets a logical variable ``s_i`` with
``A x - s = 0`` and the row's range as the logical's bounds, so an all-logical
basis is always available.  Phase 1 minimizes the sum of basic bound
violations from any starting basis (which is what makes warm starts after a
bound change cheap); phase 2 prices with Dantzig's rule and falls back to
Bland's rule after a run of degenerate pivots.
"""
from __future__ import annotations

import logging
import math
import time

import numpy as np
import scipy.sparse as sp

from . import kernels
from .factor import BasisFactor, SingularBasisError
from .kernels import AT_LOWER, AT_UPPER, BASIC, FIXED, FREE_ZERO
from .model import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, Basis, LinearProgram,
                    Solution, Tolerances, row_bounds)

log = logging.getLogger(__name__)


def _pow2(v: np.ndarray) -> np.ndarray:
    return np.exp2(np.round(np.log2(v)))


def geometric_scaling(A: sp.csr_matrix, passes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors (powers of two) that balance |a_ij| around 1."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    if A.nnz == 0:
        return r, s
    coo = A.tocoo()
    rows, cols = coo.row, coo.col
    mag = np.abs(coo.data)
    keep = mag > 0
    rows, cols, mag = rows[keep], cols[keep], mag[keep]
    for _ in range(passes):
        vals = mag * r[rows] * s[cols]
        rmax = np.zeros(m)
        rmin = np.full(m, np.inf)
        np.maximum.at(rmax, rows, vals)
        np.minimum.at(rmin, rows, vals)
        has = rmax > 0
        r[has] /= np.sqrt(rmax[has] * rmin[has])
        vals = mag * r[rows] * s[cols]
        cmax = np.zeros(n)
        cmin = np.full(n, np.inf)
        np.maximum.at(cmax, cols, vals)
        np.minimum.at(cmin, cols, vals)
        has = cmax > 0
        s[has] /= np.sqrt(cmax[has] * cmin[has])
    return _pow2(r), _pow2(s)


class CompiledLP:
    """Scaled array form of a :class:`LinearProgram` ready for the simplex."""

    def __init__(self, A: sp.csr_matrix, c, lb, ub, row_lo, row_up, scale: bool = True):
        m, n = A.shape
        self.m, self.n = m, n
        if scale:
            self.row_scale, self.col_scale = geometric_scaling(A)
        else:
            self.row_scale, self.col_scale = np.ones(m), np.ones(n)
        r, s = self.row_scale, self.col_scale
        As = sp.diags(r) @ A @ sp.diags(s)
        full = sp.hstack([As, -sp.identity(m, format="csr")], format="csc")
        full.sort_indices()
        self.full = full
        self.fullT = full.T.tocsr()
        self.c_unscaled = np.asarray(c, dtype=float)
        self.cost = np.concatenate([self.c_unscaled * s, np.zeros(m)])
        self.lo = np.empty(n + m)
        self.up = np.empty(n + m)
        self.lb_unscaled = np.asarray(lb, dtype=float).copy()
        self.ub_unscaled = np.asarray(ub, dtype=float).copy()
        self.row_lo_unscaled = np.asarray(row_lo, dtype=float).copy()
        self.row_up_unscaled = np.asarray(row_up, dtype=float).copy()
        self.lo[:n] = self.lb_unscaled / s
        self.up[:n] = self.ub_unscaled / s
        self.lo[n:] = self.row_lo_unscaled * r
        self.up[n:] = self.row_up_unscaled * r

    @classmethod
    def from_model(cls, lp: LinearProgram, scale: bool = True) -> "CompiledLP":
        lo, up = lp.row_bounds()
        return cls(lp.matrix(), lp.obj, lp.lb, lp.ub, lo, up, scale=scale)

    def set_row_bounds(self, i: int, lo: float, up: float) -> None:
        self.row_lo_unscaled[i] = lo
        self.row_up_unscaled[i] = up
        self.lo[self.n + i] = lo * self.row_scale[i]
        self.up[self.n + i] = up * self.row_scale[i]

    def set_col_bounds(self, j: int, lb: float, ub: float) -> None:
        self.lb_unscaled[j] = lb
        self.ub_unscaled[j] = ub
        self.lo[j] = lb / self.col_scale[j]
        self.up[j] = ub / self.col_scale[j]

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        start, end = self.full.indptr[j], self.full.indptr[j + 1]
        col[self.full.indices[start:end]] = self.full.data[start:end]
        return col


def _initial_status(lo: np.ndarray, up: np.ndarray) -> np.ndarray:
    status = np.full(lo.shape[0], FREE_ZERO, dtype=np.int8)
    fin_lo = np.isfinite(lo)
    fin_up = np.isfinite(up)
    status[fin_up] = AT_UPPER
    status[fin_lo] = AT_LOWER
    status[fin_lo & fin_up & (lo == up)] = FIXED
    return status


def _repair_status(status: np.ndarray, lo: np.ndarray, up: np.ndarray) -> None:
    """Make nonbasic statuses consistent with (possibly changed) bounds."""
    nb = status != BASIC
    fin_lo = np.isfinite(lo)
    fin_up = np.isfinite(up)
    fixed = nb & fin_lo & fin_up & (lo == up)
    status[nb & (status == FIXED) & ~fixed] = AT_LOWER
    status[nb & (status == AT_LOWER) & ~fin_lo] = AT_UPPER
    status[nb & (status == AT_UPPER) & ~fin_up] = AT_LOWER
    bad = nb & (((status == AT_LOWER) & ~fin_lo) | ((status == AT_UPPER) & ~fin_up))
    status[bad] = FREE_ZERO
    free_bad = nb & (status == FREE_ZERO) & (fin_lo | fin_up)
    status[free_bad & fin_lo] = AT_LOWER
    status[free_bad & ~fin_lo & fin_up] = AT_UPPER
    status[fixed] = FIXED


def _nonbasic_values(status, lo, up, x):
    x[status == AT_LOWER] = lo[status == AT_LOWER]
    x[status == FIXED] = lo[status == FIXED]
    x[status == AT_UPPER] = up[status == AT_UPPER]
    x[status == FREE_ZERO] = 0.0


class _Simplex:
    def __init__(self, comp: CompiledLP, tol: Tolerances, lo: np.ndarray, up: np.ndarray,
                 basis: Basis | None):
        self.comp = comp
        self.tol = tol
        self.lo = lo
        self.up = up
        n, m = comp.n, comp.m
        self.N = n + m
        if basis is not None and basis.head.shape[0] == m and basis.status.shape[0] == n + m:
            self.head = basis.head.astype(np.int64).copy()
            self.status = basis.status.astype(np.int8).copy()
            _repair_status(self.status, lo, up)
        else:
            self.head = np.arange(n, n + m, dtype=np.int64)
            self.status = _initial_status(lo, up)
            self.status[self.head] = BASIC
        self.x = np.zeros(self.N)
        self.factor = BasisFactor(m)
        self.iterations = 0
        self.updates = 0

    def _logical_basis(self):
        n, m = self.comp.n, self.comp.m
        self.status[self.head] = AT_LOWER
        self.head = np.arange(n, n + m, dtype=np.int64)
        _repair_status(self.status, self.lo, self.up)
        self.status[self.head] = BASIC

    def refactor(self):
        try:
            self.factor.factorize(self.comp.full[:, self.head])
        except SingularBasisError:
            log.warning("singular basis after %d iterations; restarting from the logical basis",
                        self.iterations)
            self._logical_basis()
            self.factor.factorize(self.comp.full[:, self.head])
        self.updates = 0
        self.recompute_primal()

    def recompute_primal(self):
        x = self.x
        _nonbasic_values(self.status, self.lo, self.up, x)
        x[self.head] = 0.0
        rhs = -(self.comp.full @ x)
        x[self.head] = self.factor.ftran(rhs)

    def run(self) -> str:
        tol = self.tol
        comp = self.comp
        n = comp.n
        cost = comp.cost
        lo, up, x = self.lo, self.up, self.x
        self.refactor()
        degenerate_run = 0
        bland = False
        zero_cost = np.zeros(self.N)
        stalls = 0
        while True:
            if self.iterations >= tol.max_iterations:
                return ITERATION_LIMIT
            head = self.head
            x_b = x[head]
            lo_b = lo[head]
            up_b = up[head]
            below = x_b < lo_b - tol.primal
            above = x_b > up_b + tol.primal
            phase1 = bool(below.any() or above.any())
            if phase1:
                c_b = above.astype(float) - below.astype(float)
                base_cost = zero_cost
            else:
                c_b = cost[head]
                base_cost = cost
            y = self.factor.btran(c_b)
            d = base_cost - comp.fullT @ y
            q = kernels.price(d, self.status, tol.dual, bland)
            if q < 0:
                if self.updates:
                    self.refactor()
                    continue
                self.y = y
                self.d = d
                return INFEASIBLE if phase1 else OPTIMAL
            direction = 1.0 if d[q] < 0 else -1.0
            if self.status[q] == FREE_ZERO:
                direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.factor.ftran(comp.column(q))
            r, theta, to_upper = kernels.ratio_test(
                x_b, lo_b, up_b, alpha, direction, tol.primal, tol.pivot, head, bland
            )
            span = up[q] - lo[q]
            if math.isfinite(span) and (r < 0 or span <= theta):
                # bound flip, basis unchanged
                x[q] = up[q] if direction > 0 else lo[q]
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                x[head] = x_b - direction * span * alpha
                self.iterations += 1
                degenerate_run = 0
                continue
            if r < 0:
                if not phase1:
                    self.ray = (q, direction, alpha)
                    return UNBOUNDED
                stalls += 1
                if stalls > 50:
                    return INFEASIBLE
                bland = True
                self.refactor()
                continue
            leaving = head[r]
            x[q] += direction * theta
            x[head] = x_b - direction * theta * alpha
            if to_upper:
                x[leaving] = up[leaving]
                self.status[leaving] = AT_UPPER
            else:
                x[leaving] = lo[leaving]
                self.status[leaving] = AT_LOWER
            if lo[leaving] == up[leaving]:
                self.status[leaving] = FIXED
            head[r] = q
            self.status[q] = BASIC
            self.iterations += 1
            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run >= tol.bland_after and not bland:
                    log.debug("switching to Bland's rule after %d degenerate pivots", degenerate_run)
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            self.factor.update(r, alpha)
            self.updates += 1
            if self.updates >= tol.refactor_every:
                self.refactor()


def solve_compiled(comp: CompiledLP, tol: Tolerances | None = None, basis: Basis | None = None,
                   col_lb: np.ndarray | None = None, col_ub: np.ndarray | None = None) -> Solution:
    """Solve a compiled LP, optionally overriding (unscaled) column bounds."""
    tol = tol or Tolerances()
    t0 = time.perf_counter()
    lo = comp.lo.copy()
    up = comp.up.copy()
    n = comp.n
    if col_lb is not None:
        lo[:n] = np.asarray(col_lb, dtype=float) / comp.col_scale
    if col_ub is not None:
        up[:n] = np.asarray(col_ub, dtype=float) / comp.col_scale
    if np.any(lo > up):
        return Solution(status=INFEASIBLE, wall_time=time.perf_counter() - t0,
                        message="crossed bounds")
    solver = _Simplex(comp, tol, lo, up, basis)
    status = solver.run()
    wall = time.perf_counter() - t0
    sol = Solution(status=status, iterations=solver.iterations, wall_time=wall,
                   basis=Basis(solver.head.copy(), solver.status.copy()))
    if status == OPTIMAL:
        s, r = comp.col_scale, comp.row_scale
        xs = solver.x[:n] * s
        # snap nonbasic columns onto their exact unscaled bounds
        st = solver.status[:n]
        lb_eff = lo[:n] * s
        ub_eff = up[:n] * s
        at_lo = (st == AT_LOWER) | (st == FIXED)
        xs[at_lo] = lb_eff[at_lo]
        xs[st == AT_UPPER] = ub_eff[st == AT_UPPER]
        sol.x = xs
        sol.objective = float(np.dot(comp.c_unscaled, xs))
        sol.duals = solver.y * r
        sol.reduced_costs = solver.d[:n] / s
    elif status == UNBOUNDED:
        sol.objective = -math.inf
    return sol


def solve_lp(lp: LinearProgram, tolerances: Tolerances | None = None, basis: Basis | None = None) -> Solution:
    """Solve ``lp`` to optimality, infeasibility, unboundedness or the iteration cap."""
    tol = tolerances or Tolerances()
    comp = lp.compiled() if tol.scale else CompiledLP.from_model(lp, scale=False)
    sol = solve_compiled(comp, tol, basis)
    sol.names = lp.var_names
    return sol
