"""Basis factorization: LU of a reference basis plus a product-form eta file."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels

DENSE_LIMIT = 200


class SingularBasisError(ArithmeticError):
    pass


class BasisFactor:
    def __init__(self, m: int, capacity: int = 64):
        self.m = m
        self._lu = None
        self._dense = m <= DENSE_LIMIT
        self.n_etas = 0
        self.rows = np.zeros(capacity, dtype=np.int64)
        self.pivots = np.zeros(capacity)
        self.starts = np.zeros(capacity + 1, dtype=np.int64)
        self.idx = np.zeros(capacity * 8, dtype=np.int64)
        self.vals = np.zeros(capacity * 8)

    def factorize(self, B: sp.csc_matrix) -> None:
        self.n_etas = 0
        self.starts[0] = 0
        if self.m == 0:
            self._lu = None
            return
        if self._dense:
            dense = B.toarray()
            lu, piv = la.lu_factor(dense, check_finite=False)
            diag = np.abs(np.diag(lu))
            if diag.min() <= 1e-13 * max(1.0, diag.max()):
                raise SingularBasisError("basis matrix is numerically singular")
            self._lu = (lu, piv)
        else:
            try:
                self._lu = spla.splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
            except RuntimeError as exc:
                raise SingularBasisError(str(exc)) from exc
            diag = np.abs(self._lu.U.diagonal())
            if diag.min() <= 1e-13 * max(1.0, diag.max()):
                raise SingularBasisError("basis matrix is numerically singular")

    def _solve(self, rhs: np.ndarray, trans: bool) -> np.ndarray:
        if self.m == 0:
            return rhs.copy()
        if self._dense:
            return la.lu_solve(self._lu, rhs, trans=1 if trans else 0, check_finite=False)
        return self._lu.solve(rhs, trans="T" if trans else "N")

    def ftran(self, rhs: np.ndarray) -> np.ndarray:
        z = np.ascontiguousarray(self._solve(rhs, False), dtype=float)
        if self.n_etas:
            kernels.ftran_etas(z, self.n_etas, self.rows, self.pivots, self.starts, self.idx, self.vals)
        return z

    def btran(self, rhs: np.ndarray) -> np.ndarray:
        c = np.array(rhs, dtype=float, copy=True)
        if self.n_etas:
            kernels.btran_etas(c, self.n_etas, self.rows, self.pivots, self.starts, self.idx, self.vals)
        return np.ascontiguousarray(self._solve(c, True), dtype=float)

    def update(self, r: int, alpha: np.ndarray) -> None:
        """Record the pivot on row ``r`` with entering column ``alpha = B^-1 a``."""
        ar = alpha[r]
        nz = np.flatnonzero(np.abs(alpha) > 1e-14)
        nz = nz[nz != r]
        k = self.n_etas
        if k + 1 >= self.rows.shape[0]:
            self._grow_etas()
        start = self.starts[k]
        end = start + nz.size
        while end > self.idx.shape[0]:
            self._grow_entries()
        self.rows[k] = r
        self.pivots[k] = 1.0 / ar
        self.idx[start:end] = nz
        self.vals[start:end] = -alpha[nz] / ar
        self.starts[k + 1] = end
        self.n_etas = k + 1

    def _grow_etas(self):
        cap = self.rows.shape[0] * 2
        self.rows = np.resize(self.rows, cap)
        self.pivots = np.resize(self.pivots, cap)
        starts = np.zeros(cap + 1, dtype=np.int64)
        starts[: self.starts.shape[0]] = self.starts
        self.starts = starts

    def _grow_entries(self):
        cap = self.idx.shape[0] * 2
        idx = np.zeros(cap, dtype=np.int64)
        vals = np.zeros(cap)
        idx[: self.idx.shape[0]] = self.idx
        vals[: self.vals.shape[0]] = self.vals
        self.idx, self.vals = idx, vals
