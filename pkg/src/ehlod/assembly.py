"""Fine-scale P1 (1D) / Q1 (2D) finite elements with homogeneous Dirichlet conditions."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .linalg import assemble
from .mesh import CartesianMesh, MeshError, Patch, coarse_of_fine, refine_ratio


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Piecewise constant scalar coefficient on the epsilon-grid."""

    eps_mesh: CartesianMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.eps_mesh.num_elements,):
            raise ValueError(f"expected {self.eps_mesh.num_elements} coefficient values, got {v.shape}")
        if not np.all(v > 0):
            raise ValueError("coefficient must be strictly positive")
        object.__setattr__(self, "values", v)

    @property
    def alpha(self) -> float:
        return float(self.values.min())

    @property
    def beta(self) -> float:
        return float(self.values.max())

    def on_mesh(self, mesh: CartesianMesh) -> np.ndarray:
        """Value per element of ``mesh`` (midpoint lookup; exact when eps divides h)."""
        refine_ratio(self.eps_mesh, mesh)
        return self.values[coarse_of_fine(self.eps_mesh, mesh)]

    def scaled(self, factor: float) -> "CoefficientField":
        return CoefficientField(self.eps_mesh, factor * self.values)

    def save(self, path) -> None:
        lines = [f"{self.eps_mesh.dim} {self.eps_mesh.n}"]
        lines += [repr(float(v)) for v in self.values]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "CoefficientField":
        text = Path(path).read_text().split()
        dim, n = int(text[0]), int(text[1])
        vals = np.array([float(t) for t in text[2:]])
        return cls(CartesianMesh(dim, n), vals)

    @classmethod
    def constant(cls, dim: int, value: float = 1.0) -> "CoefficientField":
        return cls(CartesianMesh(dim, 1), np.array([float(value)]))


def sample_coefficient(kind: str, dim: int, eps_n: int, lo: float, hi: float, seed: int) -> CoefficientField:
    """i.i.d. uniform values on [lo, hi] per epsilon-cell.

    Uses numpy's PCG64 generator (``np.random.default_rng(seed)``), which is
    reproducible across platforms.
    """
    if kind != "random_uniform":
        raise ValueError(f"unknown coefficient kind {kind!r}")
    if lo <= 0:
        raise ValueError("lower coefficient bound must be positive")
    if hi < lo:
        raise ValueError("upper bound below lower bound")
    mesh = CartesianMesh(dim, eps_n)
    rng = np.random.default_rng(seed)
    vals = lo + (hi - lo) * rng.random(mesh.num_elements)
    return CoefficientField(mesh, vals)


def _ref_matrices_1d(h):
    K = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    M = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0
    return K, M


def element_matrices(dim: int, h: float):
    """Local stiffness (A=1) and mass matrices, local node order x fastest."""
    K1, M1 = _ref_matrices_1d(h)
    if dim == 1:
        return K1, M1
    return np.kron(M1, K1) + np.kron(K1, M1), np.kron(M1, M1)


@dataclass(frozen=True, eq=False)
class FineSpace:
    mesh: CartesianMesh

    @cached_property
    def dof_of_node(self) -> np.ndarray:
        d = -np.ones(self.mesh.num_nodes, dtype=np.int64)
        d[self.free_nodes] = np.arange(self.free_nodes.size)
        return d

    @cached_property
    def free_nodes(self) -> np.ndarray:
        mask = np.ones(self.mesh.num_nodes, dtype=bool)
        mask[self.mesh.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def n_dofs(self) -> int:
        return int(self.free_nodes.size)

    def to_nodes(self, v) -> np.ndarray:
        """Extend a free-dof vector (or matrix of column vectors) by zeros on the boundary."""
        v = np.asarray(v)
        out = np.zeros((self.mesh.num_nodes,) + v.shape[1:])
        out[self.free_nodes] = v
        return out

    def interpolate(self, g) -> np.ndarray:
        """Nodal interpolant of ``g`` (called with coordinate arrays), free dofs only."""
        x = self.mesh.node_coords[self.free_nodes]
        return np.asarray(g(*x.T), dtype=float) * np.ones(self.n_dofs)


def _assemble_local(space: FineSpace, local: np.ndarray, weights: np.ndarray, elements=None, free_only=True):
    mesh = space.mesh
    en = mesh.element_nodes
    w = weights
    if elements is not None:
        en = en[elements]
        w = w[elements]
    nloc = en.shape[1]
    I = np.repeat(en, nloc, axis=1).ravel()
    J = np.tile(en, (1, nloc)).ravel()
    V = (w[:, None] * local.ravel()[None, :]).ravel()
    if free_only:
        dof = space.dof_of_node
        I, J = dof[I], dof[J]
        keep = (I >= 0) & (J >= 0)
        n = space.n_dofs
        return assemble(n, n, (I[keep], J[keep], V[keep]))
    n = mesh.num_nodes
    return assemble(n, n, (I, J, V))


def assemble_stiffness(space: FineSpace, A: CoefficientField, elements=None, free_only=True) -> sp.csr_matrix:
    """Stiffness matrix of a(u,v) = (A grad u, grad v); optionally restricted to a subset of fine elements."""
    try:
        coef = A.on_mesh(space.mesh)
    except MeshError as exc:
        raise MeshError(f"coefficient grid not aligned with the fine mesh: {exc}") from exc
    K, _ = element_matrices(space.mesh.dim, space.mesh.h)
    return _assemble_local(space, K, coef, elements, free_only)


def assemble_mass(space: FineSpace, elements=None, free_only=True) -> sp.csr_matrix:
    _, M = element_matrices(space.mesh.dim, space.mesh.h)
    return _assemble_local(space, M, np.ones(space.mesh.num_elements), elements, free_only)


def gauss_tensor(q: int, dim: int):
    """Tensor Gauss-Legendre rule on [0,1]^dim: points (nq, dim), weights (nq,)."""
    x, w = np.polynomial.legendre.leggauss(q)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if dim == 1:
        return x[:, None], w
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)  # [iy, ix]
    return np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel()


def ref_shape(points: np.ndarray) -> np.ndarray:
    """Values of the 2**dim local P1/Q1 shape functions at reference points, shape (nq, nloc)."""
    if points.shape[1] == 1:
        s = points[:, 0]
        return np.stack([1 - s, s], axis=1)
    s, t = points[:, 0], points[:, 1]
    return np.stack([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t], axis=1)


def assemble_load(space: FineSpace, g, quad_pts: int = 4) -> np.ndarray:
    """Vector of integrals of g against the free hat functions (tensor Gauss, quad_pts per direction)."""
    if quad_pts < 1:
        raise ValueError("need at least one quadrature point")
    mesh = space.mesh
    pts, wts = gauss_tensor(quad_pts, mesh.dim)
    phi = ref_shape(pts)
    vol = mesh.element_volume
    X = mesh.element_origins[:, None, :] + mesh.h * pts[None, :, :]  # (ne, nq, d)
    gv = np.asarray(g(*np.moveaxis(X, -1, 0)), dtype=float) * np.ones(X.shape[:2])
    local = vol * (gv * wts[None, :]) @ phi  # (ne, nloc)
    full = np.zeros(mesh.num_nodes)
    np.add.at(full, mesh.element_nodes.ravel(), local.ravel())
    return full[space.free_nodes]


@dataclass(frozen=True, eq=False)
class PatchSpace:
    """Free fine dofs strictly inside a coarse patch (functions in H^1_0 of the patch)."""

    patch: Patch
    dofs: np.ndarray
    fine_elements: np.ndarray

    @property
    def size(self) -> int:
        return int(self.dofs.size)


def patch_space(space: FineSpace, coarse: CartesianMesh, p: Patch) -> PatchSpace:
    mesh = space.mesh
    owner = coarse_of_fine(coarse, mesh)
    in_patch = np.zeros(coarse.num_elements, dtype=bool)
    in_patch[list(p.elements)] = True
    fine_in = in_patch[owner]
    en = mesh.element_nodes
    inside = np.zeros(mesh.num_nodes, dtype=bool)
    inside[en[fine_in].ravel()] = True
    inside[en[~fine_in].ravel()] = False
    dofs = space.dof_of_node[np.flatnonzero(inside)]
    dofs = np.sort(dofs[dofs >= 0])
    return PatchSpace(p, dofs, np.flatnonzero(fine_in))


def restrict_to_patch(M, ps: PatchSpace):
    if ps.size == 0:
        raise ValueError("patch has no interior degrees of freedom")
    M = sp.csr_matrix(M)
    return M[ps.dofs][:, ps.dofs]


def prolong_from_patch(v, ps: PatchSpace, n: int) -> np.ndarray:
    v = np.asarray(v)
    out = np.zeros((n,) + v.shape[1:])
    out[ps.dofs] = v
    return out


def element_energies(space: FineSpace, A: CoefficientField, v) -> np.ndarray:
    """Per fine element value of (A grad v, grad v)_{L2(T)} for a free-dof vector v."""
    K, _ = element_matrices(space.mesh.dim, space.mesh.h)
    vn = space.to_nodes(np.asarray(v, dtype=float))[space.mesh.element_nodes]  # (ne, nloc)
    return A.on_mesh(space.mesh) * np.einsum("ea,ab,eb->e", vn, K, vn)
