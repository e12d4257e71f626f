"""Sparse model containers shared by the LP, MILP and MPS code."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
NODE_LIMIT = "node-limit"

SENSES = ("<=", "=", ">=")


class ModelError(ValueError):
    """A model violates a structural invariant (names, bounds, references)."""


@dataclass
class Tolerances:
    primal: float = 1e-7
    dual: float = 1e-7
    pivot: float = 1e-9
    integrality: float = 1e-6
    mip_gap: float = 1e-6  # absolute
    max_iterations: int = 200_000
    refactor_every: int = 50
    bland_after: int = 1000  # consecutive degenerate pivots
    scale: bool = True


@dataclass
class Basis:
    """Warm-start information: basic column per row plus nonbasic statuses."""

    head: np.ndarray
    status: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy())


@dataclass
class Solution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    nodes: int = 0
    wall_time: float = 0.0
    bound: float = math.nan  # best lower bound (MILP)
    basis: Basis | None = None
    message: str = ""
    names: list[str] | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        if self.x is None or self.names is None:
            raise KeyError(name)
        return float(self.x[self.names.index(name)])

    def values(self) -> dict[str, float]:
        return dict(zip(self.names or [], map(float, self.x if self.x is not None else [])))


class LinearProgram:
    """Minimize ``c @ x`` subject to sparse rows and variable bounds.

    Rows are ``sum_j a_ij x_j  (<=, =, >=)  rhs``.  Columns and rows are
    addressed by integer index; names must be unique.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.row_names: list[str] = []
        self.row_cols: list[list[int]] = []
        self.row_vals: list[list[float]] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self._var_index: dict[str, int] = {}
        self._row_index: dict[str, int] = {}
        self._compiled = None

    # -- construction -----------------------------------------------------

    def add_variable(self, name: str, lb: float = 0.0, ub: float = INF, obj: float = 0.0) -> int:
        if name in self._var_index:
            raise ModelError(f"duplicate variable name {name!r}")
        lb, ub = float(lb), float(ub)
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise ModelError(f"variable {name!r}: bounds [{lb}, {ub}] are inconsistent")
        if lb == INF or ub == -INF:
            raise ModelError(f"variable {name!r}: bounds [{lb}, {ub}] admit no finite value")
        j = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.obj.append(float(obj))
        self._var_index[name] = j
        self._compiled = None
        return j

    def add_constraint(self, name: str, terms: Mapping[int, float] | Iterable[tuple[int, float]],
                       sense: str, rhs: float) -> int:
        if name in self._row_index:
            raise ModelError(f"duplicate constraint name {name!r}")
        if sense not in SENSES:
            raise ModelError(f"constraint {name!r}: sense must be one of {SENSES}, got {sense!r}")
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[int, float] = {}
        n = len(self.var_names)
        for col, val in items:
            col = int(col)
            if not 0 <= col < n:
                raise ModelError(f"constraint {name!r} references unknown variable index {col}")
            merged[col] = merged.get(col, 0.0) + float(val)
        i = len(self.row_names)
        self.row_names.append(name)
        self.row_cols.append(list(merged))
        self.row_vals.append(list(merged.values()))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self._row_index[name] = i
        self._compiled = None
        return i

    def set_rhs(self, row: int, value: float) -> None:
        self.rhs[row] = float(value)
        if self._compiled is not None:
            self._compiled.set_row_bounds(row, *row_bounds(self.senses[row], float(value)))

    def set_bounds(self, col: int, lb: float, ub: float) -> None:
        if lb > ub:
            raise ModelError(f"variable {self.var_names[col]!r}: bounds [{lb}, {ub}] are inconsistent")
        self.lb[col] = float(lb)
        self.ub[col] = float(ub)
        if self._compiled is not None:
            self._compiled.set_col_bounds(col, float(lb), float(ub))

    # -- queries ------------------------------------------------------------

    @property
    def num_variables(self) -> int:
        return len(self.var_names)

    @property
    def num_constraints(self) -> int:
        return len(self.row_names)

    def var_index(self, name: str) -> int:
        return self._var_index[name]

    def row_index(self, name: str) -> int:
        return self._row_index[name]

    def matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for i, (rc, rv) in enumerate(zip(self.row_cols, self.row_vals)):
            rows.extend([i] * len(rc))
            cols.extend(rc)
            vals.extend(rv)
        return sp.csr_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(self.num_constraints, self.num_variables),
        )

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.empty(self.num_constraints)
        up = np.empty(self.num_constraints)
        for i, (sense, rhs) in enumerate(zip(self.senses, self.rhs)):
            lo[i], up[i] = row_bounds(sense, rhs)
        return lo, up

    def validate(self) -> None:
        for name, lb, ub in zip(self.var_names, self.lb, self.ub):
            if lb > ub:
                raise ModelError(f"variable {name!r}: bounds [{lb}, {ub}] are inconsistent")

    def compiled(self):
        from .simplex import CompiledLP

        if self._compiled is None:
            self._compiled = CompiledLP.from_model(self)
        return self._compiled

    def residuals(self, x: np.ndarray) -> tuple[float, float]:
        """Largest row and bound violation of a point."""
        act = self.matrix() @ x
        lo, up = self.row_bounds()
        row_viol = np.maximum(lo - act, 0.0) + np.maximum(act - up, 0.0)
        lb, ub = np.asarray(self.lb), np.asarray(self.ub)
        col_viol = np.maximum(lb - x, 0.0) + np.maximum(x - ub, 0.0)
        return (float(row_viol.max(initial=0.0)), float(col_viol.max(initial=0.0)))

    def objective_value(self, x: np.ndarray) -> float:
        return float(np.dot(self.obj, x))

    def copy(self) -> "LinearProgram":
        other = type(self).__new__(type(self))
        other.__dict__.update({k: (v.copy() if isinstance(v, (list, dict, set)) else v)
                               for k, v in self.__dict__.items()})
        other.row_cols = [list(r) for r in self.row_cols]
        other.row_vals = [list(r) for r in self.row_vals]
        other._compiled = None
        return other


class MixedIntegerProgram(LinearProgram):
    """A linear program with some variables restricted to {0, 1}."""

    def __init__(self, name: str = "model"):
        super().__init__(name)
        self.binaries: set[int] = set()

    def add_binary(self, name: str, obj: float = 0.0) -> int:
        j = self.add_variable(name, 0.0, 1.0, obj)
        self.binaries.add(j)
        return j

    def mark_binary(self, col: int) -> None:
        if self.lb[col] < 0 or self.ub[col] > 1:
            raise ModelError(f"binary variable {self.var_names[col]!r} has bounds outside [0, 1]")
        self.binaries.add(col)

    def relaxation(self) -> LinearProgram:
        lp = LinearProgram.copy(self)
        lp.__class__ = LinearProgram
        del lp.binaries
        return lp

    def validate(self) -> None:
        super().validate()
        for j in self.binaries:
            if self.lb[j] < 0 or self.ub[j] > 1:
                raise ModelError(f"binary variable {self.var_names[j]!r} has bounds outside [0, 1]")


def row_bounds(sense: str, rhs: float) -> tuple[float, float]:
    if sense == "<=":
        return -INF, rhs
    if sense == ">=":
        return rhs, INF
    return rhs, rhs
