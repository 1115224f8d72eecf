"""Sparse convex QP backend (interior point via Clarabel).

The SQP layer fixes the sparsity pattern once per problem size and only
streams new values, so the COO -> CSC permutation is computed up front.
"""
from __future__ import annotations

from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

QP_TOL = 1e-8


class _CscPattern:
    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        probe = sp.csc_matrix((np.arange(1, rows.size + 1, dtype=np.float64), (rows, cols)),
                              shape=shape)
        probe.sort_indices()
        if probe.nnz != rows.size:
            raise ValueError("duplicate entries in sparsity pattern")
        self.perm = probe.data.astype(np.int64) - 1
        self.shape = shape
        self._mat = probe

    def matrix(self, coo_values) -> sp.csc_matrix:
        """The pattern matrix with new values.  The returned object is reused."""
        self._mat.data[:] = coo_values[self.perm]
        return self._mat


@dataclass
class QpResult:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    solve_time: float
    objective: float


class SparseQp:
    """min ½ zᵀHz + gᵀz  s.t.  A_eq z = b_eq,  A_in z <= b_in.

    ``H`` is given by its upper triangle.  Row order of ``A`` is all
    equalities first, then all inequalities.
    """

    def __init__(self, n_var, h_rows, h_cols, a_rows, a_cols, n_eq, n_ineq):
        self.n_var = n_var
        self.n_eq = n_eq
        self.n_ineq = n_ineq
        self._h = _CscPattern(h_rows, h_cols, (n_var, n_var))
        self._a = _CscPattern(a_rows, a_cols, (n_eq + n_ineq, n_var))
        self.cones = [clarabel.ZeroConeT(n_eq), clarabel.NonnegativeConeT(n_ineq)]
        s = clarabel.DefaultSettings()
        s.verbose = False
        s.tol_gap_abs = QP_TOL
        s.tol_gap_rel = QP_TOL
        s.tol_feas = QP_TOL
        s.max_iter = 200
        s.max_threads = 1
        s.presolve_enable = False
        self.settings = s

    def solve(self, h_vals, g, a_vals, b, tol: float = QP_TOL) -> QpResult:
        H = self._h.matrix(h_vals)
        A = self._a.matrix(a_vals)
        s = self.settings
        s.tol_gap_abs = s.tol_gap_rel = s.tol_feas = tol
        solver = clarabel.DefaultSolver(H, g, A, b, self.cones, s)
        sol = solver.solve()
        status = str(sol.status)
        return QpResult(np.asarray(sol.x), np.asarray(sol.z), status, int(sol.iterations),
                        float(sol.solve_time), float(sol.obj_val))

    def hessian(self, h_vals) -> sp.csc_matrix:
        """Full symmetric Hessian from upper-triangle values."""
        U = self._h.matrix(h_vals).copy()
        return U + sp.triu(U, k=1).T
