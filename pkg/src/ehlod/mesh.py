"""Uniform Cartesian meshes on the unit interval/square and coarse-element patches.

Elements and nodes are numbered lexicographically with x running fastest.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class CartesianMesh:
    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise MeshError(f"unsupported dimension {self.dim}; only 1 and 2 are available")
        if self.n < 1:
            raise MeshError(f"cells per side must be >= 1, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_elements(self) -> int:
        return self.n**self.dim

    @property
    def num_nodes(self) -> int:
        return (self.n + 1) ** self.dim

    @property
    def element_volume(self) -> float:
        return self.h**self.dim

    def element_multi_index(self, e):
        """(ix,) or (ix, iy) for lexicographic element index/indices ``e``."""
        e = np.asarray(e)
        if self.dim == 1:
            return (e,)
        return (e % self.n, e // self.n)

    def element_index(self, *idx):
        if self.dim == 1:
            return np.asarray(idx[0])
        return np.asarray(idx[0]) + self.n * np.asarray(idx[1])

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """Vertex ids of each element, shape (num_elements, 2**dim), local order x fastest."""
        n = self.n
        if self.dim == 1:
            e = np.arange(n)
            return np.stack([e, e + 1], axis=1)
        ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        ix, iy = ix.ravel(), iy.ravel()
        base = ix + (n + 1) * iy
        return np.stack([base, base + 1, base + n + 1, base + n + 2], axis=1)

    @cached_property
    def node_coords(self) -> np.ndarray:
        """Node coordinates, shape (num_nodes, dim)."""
        x = np.linspace(0.0, 1.0, self.n + 1)
        if self.dim == 1:
            return x[:, None]
        X, Y = np.meshgrid(x, x, indexing="xy")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    @cached_property
    def element_origins(self) -> np.ndarray:
        """Lower-left corner of every element, shape (num_elements, dim)."""
        return self.node_coords[self.element_nodes[:, 0]]

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        x = self.node_coords
        on_bnd = np.any((x < 0.5 * self.h) | (x > 1.0 - 0.5 * self.h), axis=1)
        return np.flatnonzero(on_bnd)

    def vertex_elements(self, node: int) -> np.ndarray:
        """Elements whose closure contains ``node``."""
        n = self.n
        if self.dim == 1:
            cand = [node - 1, node]
            return np.array([e for e in cand if 0 <= e < n])
        zx, zy = node % (n + 1), node // (n + 1)
        out = [
            ex + n * ey
            for ey in (zy - 1, zy)
            for ex in (zx - 1, zx)
            if 0 <= ex < n and 0 <= ey < n
        ]
        return np.array(out)


def build_mesh(dim: int, n: int) -> CartesianMesh:
    return CartesianMesh(dim, n)


def refine_ratio(coarse: CartesianMesh, fine: CartesianMesh) -> int:
    if coarse.dim != fine.dim:
        raise MeshError("coarse and fine meshes have different dimensions")
    if fine.n % coarse.n:
        raise MeshError(f"fine mesh n={fine.n} is not a refinement of coarse n={coarse.n}")
    return fine.n // coarse.n


@dataclass(frozen=True)
class Patch:
    center_set: frozenset
    layers: int
    elements: tuple

    @property
    def is_global(self) -> bool:
        return self.layers < 0

    def __contains__(self, e) -> bool:
        return int(e) in self._element_set

    @cached_property
    def _element_set(self) -> frozenset:
        return frozenset(self.elements)

    def __len__(self):
        return len(self.elements)


def _grow_once(mesh: CartesianMesh, mask: np.ndarray) -> np.ndarray:
    """One layer of the closure-intersection recursion (3**dim stencil)."""
    if mesh.dim == 1:
        out = mask.copy()
        out[1:] |= mask[:-1]
        out[:-1] |= mask[1:]
        return out
    m = mask.reshape(mesh.n, mesh.n)  # [iy, ix]
    out = m.copy()
    out[:, 1:] |= m[:, :-1]
    out[:, :-1] |= m[:, 1:]
    tmp = out.copy()
    out[1:, :] |= tmp[:-1, :]
    out[:-1, :] |= tmp[1:, :]
    return out.ravel()


def patch(mesh: CartesianMesh, S, ell) -> Patch:
    """``ell``-layer patch around the element set ``S``; ``ell=None`` or ``inf`` gives the whole domain."""
    S = np.atleast_1d(np.asarray(list(S) if not isinstance(S, np.ndarray) else S, dtype=int))
    if S.size == 0:
        raise MeshError("patch center set is empty")
    if np.any(S < 0) or np.any(S >= mesh.num_elements):
        raise MeshError(f"invalid element index in {S.tolist()}")
    center = frozenset(int(s) for s in S)
    if ell is None or ell == np.inf:
        return Patch(center, -1, tuple(range(mesh.num_elements)))
    ell = int(ell)
    if ell < 0:
        raise MeshError("number of layers must be >= 0")
    mask = np.zeros(mesh.num_elements, dtype=bool)
    mask[S] = True
    for _ in range(ell):
        grown = _grow_once(mesh, mask)
        if grown.sum() == mask.sum():
            break
        mask = grown
    return Patch(center, ell, tuple(np.flatnonzero(mask).tolist()))


def coarse_of_fine(coarse: CartesianMesh, fine: CartesianMesh) -> np.ndarray:
    """Coarse element containing each fine element."""
    r = refine_ratio(coarse, fine)
    idx = fine.element_multi_index(np.arange(fine.num_elements))
    return coarse.element_index(*[i // r for i in idx])


def fine_elements_in(coarse_elem: int, coarse: CartesianMesh, fine: CartesianMesh) -> np.ndarray:
    r = refine_ratio(coarse, fine)
    cidx = coarse.element_multi_index(coarse_elem)
    ranges = [int(c) * r + np.arange(r) for c in cidx]
    if fine.dim == 1:
        return ranges[0]
    fx, fy = np.meshgrid(ranges[0], ranges[1], indexing="xy")
    return fine.element_index(fx.ravel(), fy.ravel())
