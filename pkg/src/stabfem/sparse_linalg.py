"""Compressed-row sparse matrices, Dirichlet imposition and the linear solve.

Storage and products are implemented here; the LU factorization itself is
delegated to SuperLU through :mod:`scipy.sparse.linalg`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, InvalidArgumentError, SingularSystemError

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix with sorted, duplicate-free column indices in every row."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def to_scipy(self):
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape
        )

    def toarray(self):
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def diagonal(self):
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        d = np.zeros(min(self.shape))
        on = rows == self.col_indices
        d[rows[on]] = self.values[on]
        return d

    def triplets(self):
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        return rows, self.col_indices.copy(), self.values.copy()

    def __matmul__(self, x):
        return spmv(self, x)

    @classmethod
    def from_scipy(cls, A):
        A = sp.csr_matrix(A)
        A.sum_duplicates()
        A.sort_indices()
        return cls(
            A.shape[0],
            A.shape[1],
            A.indptr.astype(np.int64),
            A.indices.astype(np.int64),
            A.data.astype(float),
        )


@dataclass(frozen=True)
class SolveReport:
    relative_residual: float
    method: str
    iterations: int = 0


def from_triplets(n_rows, n_cols, triplets=None, *, rows=None, cols=None, vals=None):
    """Build a :class:`SparseMatrix`, summing duplicate entries.

    Entries may be given either as an iterable of ``(row, col, value)`` or as
    three parallel arrays. Duplicates are summed in input order, so the result
    does not depend on how the caller batched its contributions beyond
    floating-point summation order.
    """
    if triplets is not None:
        t = list(triplets)
        rows = np.array([r for r, _, _ in t], dtype=np.int64)
        cols = np.array([c for _, c, _ in t], dtype=np.int64)
        vals = np.array([v for _, _, v in t], dtype=float)
    else:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise InvalidArgumentError("triplet arrays differ in length")
    if len(rows) and (
        rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols
    ):
        raise InvalidArgumentError("triplet index out of range")

    keys = rows * n_cols + cols
    uniq, inverse = np.unique(keys, return_inverse=True)
    summed = np.bincount(inverse, weights=vals, minlength=len(uniq))
    urows = uniq // n_cols
    ucols = uniq % n_cols
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(urows, minlength=n_rows), out=offsets[1:])
    return SparseMatrix(int(n_rows), int(n_cols), offsets, ucols.astype(np.int64), summed)


def spmv(A, x):
    """``y = A x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.n_cols,):
        raise InvalidArgumentError(f"vector of length {x.shape} does not match {A.n_cols} columns")
    prod = A.values * x[A.col_indices]
    y = np.zeros(A.n_rows)
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_offsets))
    np.add.at(y, rows, prod)
    return y


class Factorization:
    """Sparse LU factors of a square matrix, reusable across right-hand sides."""

    def __init__(self, A):
        if A.n_rows != A.n_cols:
            raise InvalidArgumentError("matrix must be square")
        self.A = A
        self._csr = A.to_scipy()
        scale = np.abs(A.values).max() if A.nnz else 0.0
        if scale == 0.0:
            raise SingularSystemError("zero matrix")
        try:
            self._lu = spla.splu(self._csr.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
            raise SingularSystemError(str(exc)) from exc
        pivots = np.abs(self._lu.U.diagonal())
        if pivots.min() < PIVOT_TOL * scale:
            raise SingularSystemError(
                f"pivot {pivots.min():.3e} below {PIVOT_TOL} * max|A| = {PIVOT_TOL * scale:.3e}"
            )

    def solve(self, b, tol=RESIDUAL_TOL, max_refine=3):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.A.n_rows,):
            raise InvalidArgumentError("right-hand side length mismatch")
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b), SolveReport(0.0, "lu")
        x = self._lu.solve(b)
        r = b - self._csr @ x
        steps = 0
        # iterative refinement only if the first solve missed the tolerance
        while np.linalg.norm(r) > tol * bnorm and steps < max_refine:
            x = x + self._lu.solve(r)
            r = b - self._csr @ x
            steps += 1
        rel = float(np.linalg.norm(r) / bnorm)
        if not np.isfinite(rel) or rel > tol:
            raise ConvergenceError(
                f"relative residual {rel:.3e} exceeds {tol:.1e}", residual=rel
            )
        return x, SolveReport(rel, "lu", steps)


def solve(A, b):
    """Direct solve of ``A x = b``; returns ``(x, SolveReport)``."""
    b = np.asarray(b, dtype=float)
    if A.n_rows != A.n_cols:
        raise InvalidArgumentError("matrix must be square")
    if b.shape != (A.n_rows,):
        raise InvalidArgumentError("right-hand side length mismatch")
    return Factorization(A).solve(b)


def _check_constraints(constraints, n):
    seen = {}
    for dof, value in constraints:
        dof = int(dof)
        if not 0 <= dof < n:
            raise InvalidArgumentError(f"constrained dof {dof} out of range")
        if dof in seen and seen[dof] != value:
            raise InvalidArgumentError(
                f"conflicting values {seen[dof]} and {value} for dof {dof}"
            )
        seen[dof] = float(value)
    dofs = np.array(sorted(seen), dtype=np.int64)
    return dofs, np.array([seen[d] for d in dofs])


def impose_dirichlet(A, b, constraints):
    """Replace constrained rows by identity rows and lift constrained columns.

    Returns a new ``(A, b)``. Constrained columns of the unconstrained rows
    are moved to the right-hand side, so the constrained unknowns are
    recovered exactly by the solve.
    """
    b = np.array(b, dtype=float)
    dofs, values = _check_constraints(constraints, A.n_rows)
    if len(dofs) == 0:
        return A, b
    lift = DirichletLift(A, dofs)
    A_mod = lift.matrix
    return A_mod, lift.rhs(b, values)


class DirichletLift:
    """Constrained matrix plus the column-lift operator for repeated rhs updates."""

    def __init__(self, A, dofs):
        dofs = np.asarray(dofs, dtype=np.int64)
        self.dofs = dofs
        mask = np.zeros(A.n_cols, dtype=bool)
        mask[dofs] = True
        rows, cols, vals = A.triplets()
        row_c = mask[rows]
        col_c = mask[cols]
        keep = ~row_c & ~col_c
        lift = ~row_c & col_c
        # lifted columns: rhs_i -= A_ij * value_j
        self._lift = sp.csr_matrix(
            (vals[lift], (rows[lift], cols[lift])), shape=A.shape
        )
        self.matrix = from_triplets(
            A.n_rows,
            A.n_cols,
            rows=np.concatenate([rows[keep], dofs]),
            cols=np.concatenate([cols[keep], dofs]),
            vals=np.concatenate([vals[keep], np.ones(len(dofs))]),
        )

    def rhs(self, b, values):
        full = np.zeros(self._lift.shape[1])
        full[self.dofs] = values
        out = np.array(b, dtype=float) - self._lift @ full
        out[self.dofs] = values
        return out
