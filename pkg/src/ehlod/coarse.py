"""Discontinuous coarse space Q_p, its L2 projection, and the quasi-interpolation I_H.

The coarse basis on each element is the tensor product of L2-orthonormal
Legendre polynomials, so the coarse mass matrix is the identity and the
projection coefficients are plain inner products.  Local index
``i = kx + (p+1)*ky`` with ``i = 0`` the constant function.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from .assembly import FineSpace, PatchSpace
from .linalg import assemble
from .mesh import CartesianMesh, MeshError, coarse_of_fine, refine_ratio


def legendre_1d(k: int, s: np.ndarray, H: float) -> np.ndarray:
    """k-th L2(0,H)-orthonormal Legendre polynomial at local coordinates s in [0,1]."""
    c = np.zeros(k + 1)
    c[k] = 1.0
    return np.sqrt((2 * k + 1) / H) * legendre.legval(2.0 * s - 1.0, c)


@dataclass(frozen=True, eq=False)
class CoarseSpace:
    mesh: CartesianMesh
    p: int

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("polynomial degree must be >= 0")

    @property
    def M(self) -> int:
        """Number of basis functions per element."""
        return (self.p + 1) ** self.mesh.dim

    @property
    def dim(self) -> int:
        return self.M * self.mesh.num_elements

    def rows(self, K) -> np.ndarray:
        """Global coefficient indices of the element(s) K."""
        K = np.atleast_1d(np.asarray(K, dtype=np.int64))
        return (K[:, None] * self.M + np.arange(self.M)[None, :]).ravel()

    def local_degrees(self, i: int):
        q = self.p + 1
        return (i,) if self.mesh.dim == 1 else (i % q, i // q)

    def evaluate(self, K: int, i: int, x: np.ndarray) -> np.ndarray:
        """Values of Lambda_{K,i} at points x (shape (n, dim)); zero outside K."""
        x = np.atleast_2d(x)
        org = self.mesh.element_origins[K]
        H = self.mesh.h
        s = (x - org) / H
        inside = np.all((s >= 0) & (s <= 1), axis=1)
        val = np.ones(x.shape[0])
        for d, k in enumerate(self.local_degrees(i)):
            val *= legendre_1d(k, s[:, d], H)
        return np.where(inside, val, 0.0)


def check_resolution(coarse: CoarseSpace, fine: FineSpace) -> int:
    """Refinement ratio r; rejects r < p+1, for which the constraints lose rank."""
    r = refine_ratio(coarse.mesh, fine.mesh)
    if r < coarse.p + 1:
        raise MeshError(
            f"fine resolution per coarse element r={r} is below p+1={coarse.p + 1}; constraints would be rank deficient"
        )
    return r


def _tables_1d(p: int, r: int, H: float, quad_pts: int) -> np.ndarray:
    """t[pos, k, a] = integral over sub-interval pos of Lambda_k * (local hat a)."""
    xg, wg = legendre.leggauss(quad_pts)
    sig = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    hat = np.stack([1.0 - sig, sig], axis=1)  # (nq, 2)
    t = np.empty((r, p + 1, 2))
    for pos in range(r):
        s = (pos + sig) / r
        lam = np.stack([legendre_1d(k, s, H) for k in range(p + 1)], axis=0)  # (p+1, nq)
        t[pos] = (H / r) * (lam * wg[None, :]) @ hat
    return t


class CoarseOperators:
    """Coarse/fine coupling on aligned meshes: constraint matrix C, Pi_H and I_H."""

    def __init__(self, coarse: CoarseSpace, fine: FineSpace, quad_pts: int | None = None):
        self.coarse = coarse
        self.fine = fine
        self.r = check_resolution(coarse, fine)
        self.quad_pts = coarse.p + 3 if quad_pts is None else int(quad_pts)
        if self.quad_pts < coarse.p + 2:
            raise ValueError("quadrature too coarse for exact constraint integrals")

    @cached_property
    def owner(self) -> np.ndarray:
        return coarse_of_fine(self.coarse.mesh, self.fine.mesh)

    @cached_property
    def C_nodes(self) -> sp.csr_matrix:
        """Constraint matrix against all fine nodes (boundary included)."""
        cs, fs, r = self.coarse, self.fine, self.r
        fm = fs.mesh
        t = _tables_1d(cs.p, r, cs.mesh.h, self.quad_pts)
        fidx = fm.element_multi_index(np.arange(fm.num_elements))
        pos = [np.asarray(f) % r for f in fidx]
        if fm.dim == 1:
            loc = t[pos[0]]  # (ne, M, 2)
        else:
            tx, ty = t[pos[0]], t[pos[1]]  # (ne, p+1, 2)
            # i = kx + (p+1) ky, a = ax + 2 ay
            loc = np.einsum("eka,elb->elkba", tx, ty).reshape(fm.num_elements, cs.M, 4)
        rows = self.owner[:, None] * cs.M + np.arange(cs.M)[None, :]  # (ne, M)
        nloc = loc.shape[2]
        I = np.repeat(rows[:, :, None], nloc, axis=2).ravel()
        J = np.repeat(fm.element_nodes[:, None, :], cs.M, axis=1).ravel()
        return assemble(cs.dim, fm.num_nodes, (I, J, loc.ravel()))

    @cached_property
    def C(self) -> sp.csr_matrix:
        """Constraint matrix on free fine dofs: C[(K,i), j] = (phi_j, Lambda_{K,i})."""
        return sp.csr_matrix(self.C_nodes[:, self.fine.free_nodes])

    def _operand(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] == self.fine.n_dofs:
            return self.C, v
        if v.shape[0] == self.fine.mesh.num_nodes:
            return self.C_nodes, v
        raise MeshError(f"vector of length {v.shape[0]} does not live on the fine mesh")

    def project(self, v) -> np.ndarray:
        """Coefficients of Pi_H v (free-dof or full nodal vector)."""
        C, v = self._operand(v)
        return C @ v

    def constraint_rows(self, ps: PatchSpace):
        rows = self.coarse.rows(np.asarray(ps.patch.elements))
        return rows, sp.csr_matrix(self.C[rows][:, ps.dofs])

    @cached_property
    def prolongation(self) -> sp.csr_matrix:
        """Fine nodal interpolant of coarse P1/Q1 functions (fine nodes x coarse nodes)."""
        nc, nf = self.coarse.mesh.n, self.fine.mesh.n
        x = np.arange(nf + 1) / nf
        k = np.minimum((x * nc).astype(np.int64), nc - 1)
        sig = x * nc - k
        P1 = sp.csr_matrix(
            (np.r_[1 - sig, sig], (np.r_[np.arange(nf + 1), np.arange(nf + 1)], np.r_[k, k + 1])),
            shape=(nf + 1, nc + 1),
        )
        P1.eliminate_zeros()
        if self.fine.mesh.dim == 1:
            return P1
        return sp.csr_matrix(sp.kron(P1, P1))

    @cached_property
    def mean_matrix(self) -> sp.csr_matrix:
        """Element means of a fine nodal vector (coarse elements x fine nodes)."""
        fm = self.fine.mesh
        nloc = fm.element_nodes.shape[1]
        w = fm.element_volume / nloc / self.coarse.mesh.element_volume
        I = np.repeat(self.owner, nloc)
        J = fm.element_nodes.ravel()
        return assemble(self.coarse.mesh.num_elements, fm.num_nodes, (I, J, np.full(I.size, w)))

    @cached_property
    def averaging(self) -> sp.csr_matrix:
        """Coarse nodal values from element means: volume-weighted average, zero on the boundary."""
        cm = self.coarse.mesh
        interior = np.setdiff1d(np.arange(cm.num_nodes), cm.boundary_nodes)
        I, J, V = [], [], []
        for z in interior:
            els = cm.vertex_elements(int(z))
            I += [z] * len(els)
            J += list(els)
            V += [1.0 / len(els)] * len(els)  # |K| / |N(z)| on a uniform mesh
        return assemble(cm.num_nodes, cm.num_elements, (np.array(I, dtype=int), np.array(J, dtype=int), np.array(V)))

    @cached_property
    def IH(self) -> sp.csr_matrix:
        """I_H as a matrix on free fine dofs."""
        free = self.fine.free_nodes
        full = self.prolongation @ self.averaging @ self.mean_matrix
        return sp.csr_matrix(full[free][:, free])

    def quasi_interpolate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] == self.fine.mesh.num_nodes:
            return self.prolongation @ (self.averaging @ (self.mean_matrix @ v))
        if v.shape[0] != self.fine.n_dofs:
            raise MeshError(f"vector of length {v.shape[0]} does not live on the fine mesh")
        return self.IH @ v

    def ih_of_coarse(self, coeffs) -> np.ndarray:
        """I_H applied to a coarse DG function given by its coefficients (free fine dofs).

        Only the constant modes have nonzero element means.
        """
        coeffs = np.asarray(coeffs, dtype=float)
        cm = self.coarse.mesh
        c0 = coeffs.reshape((cm.num_elements, self.coarse.M) + coeffs.shape[1:])[:, 0]
        means = c0 / np.sqrt(cm.element_volume)
        nodal = self.prolongation @ (self.averaging @ means)
        return nodal[self.fine.free_nodes]

    def c_form(self, v, K: int) -> np.ndarray:
        """(v - I_H v, Lambda_{K,j})_{L2(K)} for all local j."""
        if not 0 <= int(K) < self.coarse.mesh.num_elements:
            raise MeshError(f"invalid coarse element {K}")
        v = np.asarray(v, dtype=float)
        d = v - self.quasi_interpolate(v)
        rows = self.coarse.rows(K)
        C, d = self._operand(d)
        return C[rows] @ d


def project_PiH(space: CoarseSpace, fine: FineSpace, v) -> np.ndarray:
    return CoarseOperators(space, fine).project(v)


def constraint_matrix(space: CoarseSpace, ps: PatchSpace, fine: FineSpace):
    return CoarseOperators(space, fine).constraint_rows(ps)[1]


def quasi_interpolate_IH(fine: FineSpace, coarse_mesh: CartesianMesh, v) -> np.ndarray:
    return CoarseOperators(CoarseSpace(coarse_mesh, 0), fine).quasi_interpolate(v)


def c_form(coarse: CoarseSpace, fine: FineSpace, v, K: int) -> np.ndarray:
    return CoarseOperators(coarse, fine).c_form(v, K)
