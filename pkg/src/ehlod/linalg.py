"""Sparse assembly and direct LU solves (scipy.sparse / SuperLU underneath).

Saddle-point systems are indefinite, so everything goes through LU with
partial pivoting; no iterative solvers.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, msg, pivot=None):
        super().__init__(msg)
        self.pivot = pivot


def assemble(rows: int, cols: int, triplets) -> sp.csr_matrix:
    """CSR matrix from (i, j, value) triplets; duplicates are summed.

    ``triplets`` may be a list of tuples or a tuple of three arrays (I, J, V).
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and np.ndim(triplets[0]) == 1:
        I, J, V = (np.asarray(t) for t in triplets)
    else:
        trip = list(triplets)
        if trip:
            I, J, V = (np.asarray(t) for t in zip(*trip))
        else:
            I = J = np.zeros(0, dtype=int)
            V = np.zeros(0)
    I = I.astype(np.int64)
    J = J.astype(np.int64)
    if I.size and (I.min() < 0 or I.max() >= rows or J.min() < 0 or J.max() >= cols):
        raise IndexError(f"triplet index out of range for a {rows}x{cols} matrix")
    A = sp.coo_matrix((V.astype(float), (I, J)), shape=(rows, cols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, tol=1e-12) -> bool:
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        return False
    scale = abs(A).max() if A.nnz else 0.0
    diff = A - A.T
    return (abs(diff).max() if diff.nnz else 0.0) <= tol * max(scale, 1e-300)


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix has {A.shape[1]} columns, vector has {x.shape[0]}")
    return A @ x


def _dense_pivot(A, limit: int = 4000):
    """Index of the smallest LU pivot, for error messages on small matrices."""
    if A.shape[0] > limit:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, _ = sla.lu_factor(A.toarray())
    return int(np.argmin(np.abs(np.diag(lu))))


class Factorization:
    """LU handle reusable for many right-hand sides (sparse or dense input)."""

    def __init__(self, A, pivot_tol=1e-14):
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"cannot factorize a non-square {A.shape} matrix")
        self.shape = A.shape
        self.dense = not sp.issparse(A)
        if self.dense:
            self.A = np.asarray(A, dtype=float)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(self.A, check_finite=True)
            diag = np.abs(np.diag(lu))
            self._lu = (lu, piv)
        else:
            self.A = sp.csc_matrix(A, dtype=float)
            try:
                self._lu = spla.splu(self.A, permc_spec="COLAMD")
            except RuntimeError as exc:  # "Factor is exactly singular"
                raise SingularMatrixError(f"matrix is singular: {exc}", pivot=_dense_pivot(self.A)) from exc
            diag = np.abs(self._lu.U.diagonal())
        scale = diag.max() if diag.size else 1.0
        k = int(np.argmin(diag)) if diag.size else 0
        if diag.size and (not np.isfinite(diag).all() or diag[k] <= pivot_tol * scale):
            raise SingularMatrixError(
                f"matrix is singular to working precision: pivot {k} has magnitude "
                f"{diag[k]:.3e} (largest {scale:.3e})",
                pivot=k,
            )

    def _raw(self, b):
        if self.dense:
            return sla.lu_solve(self._lu, b)
        return self._lu.solve(b)

    def solve(self, b, refine: bool = True) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"dimension mismatch: system has size {self.shape[0]}, rhs has {b.shape[0]}")
        x = self._raw(b)
        if not refine:
            return x
        # one step of iterative refinement keeps the residual at roundoff level
        r = b - self.A @ x
        x = x + self._raw(r)
        return x


def factorize(A) -> Factorization:
    return Factorization(A)


def solve(F: Factorization, b) -> np.ndarray:
    return F.solve(b)


def relative_residual(A, x, b) -> float:
    b = np.asarray(b)
    return float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1.0))
