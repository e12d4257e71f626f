"""Branch and bound over binary variables on top of the simplex."""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (INFEASIBLE, NODE_LIMIT, OPTIMAL, UNBOUNDED, Basis, MixedIntegerProgram,
                    Solution, Tolerances)
from .simplex import solve_compiled

log = logging.getLogger(__name__)


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int  # ties go to the deepest node, which keeps backtracking local
    seq: int
    fixings: dict = field(compare=False)
    basis: Basis | None = field(compare=False, default=None)

    @property
    def depth(self) -> int:
        return -self.neg_depth


def _most_fractional(x: np.ndarray, bins: np.ndarray, tol: float) -> int:
    vals = x[bins]
    frac = np.abs(vals - np.round(vals))
    cand = frac > tol
    if not cand.any():
        return -1
    score = np.where(cand, np.abs(vals - np.floor(vals) - 0.5), np.inf)
    return int(bins[int(np.argmin(score))])


def solve_milp(mip: MixedIntegerProgram, tolerances: Tolerances | None = None,
               node_limit: int = 100_000, time_limit: float | None = None) -> Solution:
    """Minimize a mixed-binary program by depth-first branch and bound.

    Branches on the most fractional binary.  Each dive follows the child on
    the side the fractional value rounds to; when a dive ends the open node
    with the best bound is resumed.  Node LPs are warm-started from the
    parent's basis.  On hitting ``node_limit`` the incumbent (if any) and the
    best open bound are returned with status ``node-limit``.
    """
    tol = tolerances or Tolerances()
    mip.validate()
    t0 = time.perf_counter()
    comp = mip.compiled()
    lb0 = np.asarray(mip.lb, dtype=float)
    ub0 = np.asarray(mip.ub, dtype=float)
    bins = np.array(sorted(mip.binaries), dtype=np.int64)

    incumbent_x = None
    incumbent_obj = math.inf
    nodes = 0
    iterations = 0
    seq = 0
    pool: list[_Node] = []
    bound_trace: list[tuple[float, float]] = []

    def node_bounds(fixings):
        lb = lb0.copy()
        ub = ub0.copy()
        for j, v in fixings.items():
            lb[j] = ub[j] = v
        return lb, ub

    current: _Node | None = _Node(-math.inf, 0, 0, {}, None)
    root_status = None
    hit_limit = False
    while current is not None or pool:
        if current is None:
            current = heapq.heappop(pool)
            if current.bound >= incumbent_obj - tol.mip_gap:
                current = None
                continue
        if nodes >= node_limit or (time_limit is not None and time.perf_counter() - t0 > time_limit):
            heapq.heappush(pool, current)
            hit_limit = True
            break
        lb, ub = node_bounds(current.fixings)
        sol = solve_compiled(comp, tol, current.basis, lb, ub)
        nodes += 1
        iterations += sol.iterations
        if root_status is None:
            root_status = sol.status
            if sol.status == UNBOUNDED:
                return Solution(status=UNBOUNDED, objective=-math.inf, nodes=1,
                                iterations=iterations, wall_time=time.perf_counter() - t0,
                                names=mip.var_names)
        if sol.status != OPTIMAL or sol.objective >= incumbent_obj - tol.mip_gap:
            current = None
            continue
        x = sol.x
        j = _most_fractional(x, bins, tol.integrality)
        if j < 0:
            xi = x.copy()
            xi[bins] = np.round(xi[bins])
            incumbent_x = xi
            incumbent_obj = sol.objective
            open_bound = min([n.bound for n in pool], default=incumbent_obj)
            bound_trace.append((min(open_bound, incumbent_obj), incumbent_obj))
            log.debug("node %d: incumbent %.10g", nodes, incumbent_obj)
            current = None
            continue
        up_first = x[j] >= 0.5
        children = []
        for v in ((1.0, 0.0) if up_first else (0.0, 1.0)):
            fix = dict(current.fixings)
            fix[j] = v
            seq += 1
            children.append(_Node(sol.objective, -(current.depth + 1), seq, fix, sol.basis))
        heapq.heappush(pool, children[1])
        current = children[0]

    wall = time.perf_counter() - t0
    if hit_limit:
        bound = min([n.bound for n in pool], default=incumbent_obj)
        bound = min(bound, incumbent_obj)
        status = NODE_LIMIT
    else:
        bound = incumbent_obj
        status = OPTIMAL if incumbent_x is not None else INFEASIBLE
    out = Solution(status=status, nodes=nodes, iterations=iterations, wall_time=wall,
                   bound=bound, names=mip.var_names)
    if incumbent_x is not None:
        out.x = incumbent_x
        out.objective = incumbent_obj
    out.bound_trace = bound_trace  # type: ignore[attr-defined]
    return out
