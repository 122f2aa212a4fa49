"""Multiscale basis construction: ideal operator R and its localized variants.

All basis vectors are stored as columns of a sparse matrix in free fine-dof
coordinates.  Column ``K*M + i`` belongs to the coarse function Lambda_{K,i}.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import (
    CoefficientField,
    FineSpace,
    PatchSpace,
    assemble_mass,
    assemble_stiffness,
    patch_space,
)
from .coarse import CoarseOperators, CoarseSpace
from .linalg import RESIDUAL_TOL, Factorization, SingularMatrixError
from .mesh import CartesianMesh, coarse_of_fine, patch

STRATEGIES = ("ideal", "naive", "bubble", "generalized")
CACHE_VERSION = 1


class SaddleSolveError(RuntimeError):
    pass


def _is_inf(ell) -> bool:
    return ell is None or (isinstance(ell, float) and math.isinf(ell)) or ell == "inf"


class SaddleSolver:
    """Factored KKT system [[A, C^T], [C, 0]] for repeated solves.

    The constraint block is rescaled internally to the magnitude of A, which
    leaves x unchanged and keeps the indefinite LU well conditioned.
    """

    def __init__(self, A, C):
        A = sp.csr_matrix(A)
        C = sp.csr_matrix(C)
        if C.shape[1] != A.shape[0]:
            raise ValueError("constraint block does not match the stiffness block")
        self.n, self.m = A.shape[0], C.shape[0]
        amax = abs(A).max() if A.nnz else 1.0
        cmax = abs(C).max() if C.nnz else 1.0
        self.scale = amax / cmax
        Cs = C * self.scale
        self.A, self.C = A, C
        self.K = sp.bmat([[A, Cs.T], [Cs, None]], format="csc")
        try:
            self.F = Factorization(self.K)
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                f"saddle system singular (constraints rank deficient or stiffness singular on ker C): {exc}",
                pivot=exc.pivot,
            ) from exc

    def solve(self, b, c):
        b = np.asarray(b, dtype=float)
        c = np.asarray(c, dtype=float)
        rhs = np.concatenate([b, self.scale * c], axis=0)
        z = self.F.solve(rhs)
        res = self.K @ z - rhs
        axis = 0
        rel = np.linalg.norm(res, axis=axis) / np.maximum(np.linalg.norm(rhs, axis=axis), 1.0)
        if np.max(rel, initial=0.0) > RESIDUAL_TOL:
            raise SaddleSolveError(f"saddle residual {np.max(rel):.2e} exceeds {RESIDUAL_TOL:g}")
        x, lam = z[: self.n], z[self.n :] * self.scale
        return x, lam

    def residuals(self, x, lam, b, c):
        """Relative block residuals (stiffness row, constraint row)."""
        r1 = self.A @ x + self.C.T @ lam - b
        r2 = self.C @ x - c
        return (
            float(np.linalg.norm(r1) / max(np.linalg.norm(b), 1.0)),
            float(np.linalg.norm(r2) / max(np.linalg.norm(c), 1.0)),
        )


def solve_saddle(A, C, b, c):
    """Solve A x + C^T lam = b, C x = c by one monolithic LU."""
    return SaddleSolver(A, C).solve(b, c)


class LODProblem:
    """Fine/coarse discretization plus cached patch solvers for one (H, h, p, A)."""

    def __init__(self, fine_mesh: CartesianMesh, coarse_mesh: CartesianMesh, p: int, A: CoefficientField,
                 quad_pts: int | None = None):
        self.fine = FineSpace(fine_mesh)
        self.coarse = CoarseSpace(coarse_mesh, p)
        self.A = A
        self.ops = CoarseOperators(self.coarse, self.fine, quad_pts)
        self._solvers: dict = {}
        self._patch_spaces: dict = {}
        self._elem_stiff: dict = {}

    @property
    def p(self) -> int:
        return self.coarse.p

    @cached_property
    def K(self) -> sp.csr_matrix:
        return assemble_stiffness(self.fine, self.A)

    @cached_property
    def M(self) -> sp.csr_matrix:
        return assemble_mass(self.fine)

    @property
    def C(self) -> sp.csr_matrix:
        return self.ops.C

    @cached_property
    def owner(self) -> np.ndarray:
        return coarse_of_fine(self.coarse.mesh, self.fine.mesh)

    def patch_elements(self, K, ell) -> tuple:
        if _is_inf(ell):
            return tuple(range(self.coarse.mesh.num_elements))
        return patch(self.coarse.mesh, [K], ell).elements

    def patch_space(self, elements: tuple) -> PatchSpace:
        ps = self._patch_spaces.get(elements)
        if ps is None:
            ps = patch_space(self.fine, self.coarse.mesh, patch(self.coarse.mesh, list(elements), 0))
            self._patch_spaces[elements] = ps
        return ps

    def solver(self, elements: tuple):
        """(PatchSpace, constraint row indices, SaddleSolver) for the patch ``elements``, cached."""
        hit = self._solvers.get(elements)
        if hit is None:
            ps = self.patch_space(elements)
            rows, Cp = self.ops.constraint_rows(ps)
            Ap = self.K[ps.dofs][:, ps.dofs]
            hit = (ps, rows, SaddleSolver(Ap, Cp))
            self._solvers[elements] = hit
        return hit

    def element_stiffness(self, T: int) -> sp.csr_matrix:
        """Stiffness matrix restricted to the fine elements of coarse element T."""
        Kt = self._elem_stiff.get(T)
        if Kt is None:
            Kt = assemble_stiffness(self.fine, self.A, elements=np.flatnonzero(self.owner == T))
            self._elem_stiff[T] = Kt
        return Kt

    def support_dofs(self, elements) -> np.ndarray:
        """Free fine dofs in the closure of a union of coarse elements."""
        mask = np.zeros(self.coarse.mesh.num_elements, dtype=bool)
        mask[list(elements)] = True
        nodes = np.unique(self.fine.mesh.element_nodes[mask[self.owner]].ravel())
        d = self.fine.dof_of_node[nodes]
        return d[d >= 0]

    def clear_cache(self):
        self._solvers.clear()


@dataclass
class MultiscaleSpace:
    strategy: str
    ell: object
    problem: LODProblem
    basis: sp.csc_matrix
    supports: list = field(default_factory=list)

    @property
    def n_ms(self) -> int:
        return self.basis.shape[1]

    @property
    def ell_label(self) -> str:
        return "inf" if _is_inf(self.ell) else str(int(self.ell))

    def column(self, K: int, i: int) -> np.ndarray:
        return self.basis[:, K * self.problem.coarse.M + i].toarray().ravel()


def _columns_to_csc(n: int, cols: list) -> sp.csc_matrix:
    """Columns given as (dofs, values) pairs."""
    indptr = np.zeros(len(cols) + 1, dtype=np.int64)
    idx, val = [], []
    for k, (d, v) in enumerate(cols):
        keep = v != 0.0
        idx.append(np.asarray(d)[keep])
        val.append(np.asarray(v)[keep])
        indptr[k + 1] = indptr[k] + int(keep.sum())
    if cols:
        idx = np.concatenate(idx)
        val = np.concatenate(val)
    else:
        idx, val = np.zeros(0, dtype=np.int64), np.zeros(0)
    B = sp.csc_matrix((val, idx, indptr), shape=(n, len(cols)))
    B.sort_indices()
    return B


def _unit_rows(rows: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Matrix e with e[a, b] = 1 where rows[a] == targets[b]."""
    return (rows[:, None] == targets[None, :]).astype(float)


def ideal_basis(problem: LODProblem) -> MultiscaleSpace:
    """R Lambda_{K,i} from the global saddle problem with c = unit coefficient."""
    elements = problem.patch_elements(0, None)
    ps, rows, S = problem.solver(elements)
    n = problem.fine.n_dofs
    c = np.eye(rows.size)
    x, _ = S.solve(np.zeros((ps.size, rows.size)), c)
    B = _columns_to_csc(n, [(ps.dofs, x[:, k]) for k in range(rows.size)])
    return MultiscaleSpace("ideal", math.inf, problem, B, [elements] * rows.size)


def localized_naive(problem: LODProblem, ell) -> MultiscaleSpace:
    if not _is_inf(ell) and int(ell) < 1:
        raise ValueError("localization parameter must be >= 1")
    if _is_inf(ell):
        sp_ = ideal_basis(problem)
        sp_.strategy = "naive"
        return sp_
    cs = problem.coarse
    cols, supports = [], []
    for K in range(cs.mesh.num_elements):
        elements = problem.patch_elements(K, ell)
        ps, rows, S = problem.solver(elements)
        c = _unit_rows(rows, cs.rows(K))
        x, _ = S.solve(np.zeros((ps.size, cs.M)), c)
        for i in range(cs.M):
            cols.append((ps.dofs, x[:, i]))
            supports.append(elements)
    return MultiscaleSpace("naive", ell, problem, _columns_to_csc(problem.fine.n_dofs, cols), supports)


def _union(*sets) -> tuple:
    out = set()
    for s in sets:
        out.update(s)
    return tuple(sorted(out))


def _corrector_sum(problem: LODProblem, v: np.ndarray, centers, ell, c_of_T):
    """Sum over T in ``centers`` of patch solutions on N^ell(T) with b = a_T(v, .).

    ``c_of_T(T, rows)`` gives the constraint right-hand side on the patch rows.
    Returns the summed fine vector and the union of the patches.
    """
    n = problem.fine.n_dofs
    total = np.zeros(n)
    touched: list = []
    for T in centers:
        elements = problem.patch_elements(T, ell)
        ps, rows, S = problem.solver(elements)
        b = (problem.element_stiffness(T) @ v)[ps.dofs]
        x, _ = S.solve(b, c_of_T(T, rows))
        total[ps.dofs] += x
        touched.append(elements)
    return total, _union(*touched)


def bubble_basis(problem: LODProblem, ell) -> MultiscaleSpace:
    """Extended-bubble strategy.

    The bubble Phi_{K,0} is the energy minimizer in H^1_0(N^1(K)) with
    Pi_H Phi = Lambda_{K,0}.  Its corrector is split element-wise,
    C Phi = sum_{T in N^1(K)} C_T Phi with C_T solved on N^ell(T) against
    a_T(Phi, .).  Higher-order functions use the naive construction.
    """
    if not _is_inf(ell) and int(ell) < 1:
        raise ValueError("localization parameter must be >= 1")
    cs = problem.coarse
    n = problem.fine.n_dofs
    naive = localized_naive(problem, ell)
    cols, supports = [], []
    for K in range(cs.mesh.num_elements):
        e1 = problem.patch_elements(K, 1)
        ps, rows, S = problem.solver(e1)
        x, _ = S.solve(np.zeros(ps.size), _unit_rows(rows, cs.rows(K)[:1])[:, 0])
        phi = np.zeros(n)
        phi[ps.dofs] = x
        corr, touched = _corrector_sum(problem, phi, e1, ell, lambda T, r: np.zeros(r.size))
        v = phi - corr
        support = _union(e1, touched)
        dofs = problem.support_dofs(support)
        cols.append((dofs, v[dofs]))
        supports.append(support)
        for i in range(1, cs.M):
            k = K * cs.M + i
            col = naive.basis[:, k]
            cols.append((col.indices, col.data))
            supports.append(naive.supports[k])
    return MultiscaleSpace("bubble", ell, problem, _columns_to_csc(n, cols), supports)


def generalized_apply(problem: LODProblem, coeff: np.ndarray, K: int, ell):
    """R^ell applied to a coarse function with coefficients ``coeff`` supported on K.

    R^ell v = I_H v - sum_{T in N^1(K)} K^ell_T v, where K^ell_T v lives on
    N^ell(T) and solves the saddle problem with b = a_T(I_H v, .) and
    constraint data Pi_H(I_H v) - Pi_H v on T, zero on the rest of the patch.
    Summing over T gives Pi_H R^ell v = Pi_H v for every ell.  Returns the
    fine vector and the union of coarse elements it may touch.
    """
    cs = problem.coarse
    coeff = np.asarray(coeff, dtype=float)
    ih = problem.ops.ih_of_coarse(coeff)
    pih = problem.ops.C @ ih
    centers = problem.patch_elements(K, 1) if np.any(ih) else (K,)

    def c_of_T(T, rows):
        c = np.zeros(rows.size)
        sel = np.isin(rows, cs.rows(T))
        c[sel] = pih[rows[sel]] - coeff[rows[sel]]
        return c

    corr, touched = _corrector_sum(problem, ih, centers, ell, c_of_T)
    return ih - corr, _union(centers, touched)


def localized_generalized(problem: LODProblem, ell) -> MultiscaleSpace:
    """Generalized localization of the quasi-interpolation splitting R^ell = I_H - K^ell.

    I_H Lambda_{K,i} is supported on N^1(K), hence the correctors are
    centered on the elements of N^1(K).
    """
    if not _is_inf(ell) and int(ell) < 1:
        raise ValueError("localization parameter must be >= 1")
    cs = problem.coarse
    n = problem.fine.n_dofs
    cols, supports = [], []
    for K in range(cs.mesh.num_elements):
        for i in range(cs.M):
            coeff = np.zeros(cs.dim)
            coeff[K * cs.M + i] = 1.0
            v, support = generalized_apply(problem, coeff, K, ell)
            dofs = problem.support_dofs(support)
            cols.append((dofs, v[dofs]))
            supports.append(support)
    return MultiscaleSpace("generalized", ell, problem, _columns_to_csc(n, cols), supports)


def build_space(problem: LODProblem, strategy: str, ell) -> MultiscaleSpace:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == "ideal":
        return ideal_basis(problem)
    return {"naive": localized_naive, "bubble": bubble_basis, "generalized": localized_generalized}[strategy](
        problem, ell
    )


class RankDeficientError(np.linalg.LinAlgError):
    pass


def normalize_columns(B, M) -> sp.csc_matrix:
    """Scale every column to unit L2 norm (span unchanged)."""
    B = sp.csc_matrix(B)
    norms = np.sqrt(np.asarray((B.multiply(M @ B)).sum(axis=0)).ravel())
    if np.any(norms == 0):
        raise RankDeficientError("basis contains a zero column")
    return sp.csc_matrix(B @ sp.diags(1.0 / norms))


def galerkin_reduce(B, K_fine, M_fine, rank_tol: float = 1e-13):
    """Dense K_red = B^T K B and M_red = B^T M B, symmetrized; M_red must be SPD."""
    B = sp.csc_matrix(B) if sp.issparse(B) else np.asarray(B)
    KB = K_fine @ B
    MB = M_fine @ B
    K_red = B.T @ KB
    M_red = B.T @ MB
    K_red = np.asarray(K_red.toarray() if sp.issparse(K_red) else K_red)
    M_red = np.asarray(M_red.toarray() if sp.issparse(M_red) else M_red)
    K_red = 0.5 * (K_red + K_red.T)
    M_red = 0.5 * (M_red + M_red.T)
    d = np.sqrt(np.diag(M_red))
    if np.any(d == 0):
        raise RankDeficientError("basis contains a zero column")
    ev = np.linalg.eigvalsh(M_red / np.outer(d, d))
    if ev[0] <= rank_tol * ev[-1]:
        raise RankDeficientError(
            f"reduced mass matrix numerically singular (eigenvalue ratio {ev[0] / ev[-1]:.2e}); "
            "basis columns are nearly dependent"
        )
    return K_red, M_red


def orthonormal_basis(B, M, rank_tol: float = 1e-12) -> np.ndarray:
    """Dense M-orthonormal basis of span(B).

    With M = U^T U (banded Cholesky) and U B = Q R (pivoted Householder QR),
    X = U^{-1} Q spans the same space as B up to backward error.  This avoids
    forming the Gram matrix, whose condition number is the square of that of B.
    Columns with |R_kk| < rank_tol * |R_00| mean B is numerically rank
    deficient and the configuration is rejected.
    """
    M = sp.csr_matrix(M)
    n = M.shape[0]
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    u = int(max(abs(M.indices - np.repeat(np.arange(n), np.diff(M.indptr))).max(initial=0), 0))
    ab = np.zeros((u + 1, n))
    for k in range(u + 1):
        ab[u - k, k:] = M.diagonal(k)
    U_ab = sla.cholesky_banded(ab, lower=False)
    U = sp.diags([U_ab[u - k, k:] for k in range(u + 1)], list(range(u + 1)), shape=(n, n), format="csr")
    Y = U @ B
    norms = np.linalg.norm(Y, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("basis contains a zero column")
    Q, R, _ = sla.qr(Y / norms, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size and d[-1] < rank_tol * d[0]:
        raise RankDeficientError(
            f"enriched basis numerically rank deficient (|R| ratio {d[-1] / d[0]:.2e} < {rank_tol:g}); "
            "corrections are nearly dependent"
        )
    return sla.solve_banded((0, u), U_ab, Q)


# ---- versioned basis cache -------------------------------------------------


def config_key(meta: dict, A: CoefficientField) -> str:
    h = hashlib.sha256(json.dumps(meta, sort_keys=True, default=str).encode())
    h.update(np.ascontiguousarray(A.values).tobytes())
    return h.hexdigest()[:20]


def save_basis(path, B, meta: dict) -> None:
    B = sp.coo_matrix(B)
    meta = dict(meta, version=CACHE_VERSION, shape=list(B.shape))
    with open(path, "wb") as fh:
        np.savez_compressed(fh, row=B.row, col=B.col, val=B.data, meta=np.array(json.dumps(meta, sort_keys=True)))


def load_basis(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CACHE_VERSION:
            raise ValueError(f"basis cache version {meta.get('version')} != {CACHE_VERSION}")
        B = sp.csc_matrix((z["val"], (z["row"], z["col"])), shape=tuple(meta["shape"]))
    return B, meta


def cached_path(cache_dir, meta: dict, A: CoefficientField) -> Path:
    return Path(cache_dir) / f"basis_{config_key(meta, A)}.npz"
