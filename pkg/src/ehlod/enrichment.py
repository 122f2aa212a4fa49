"""Enriched corrections D^ell_K and the enriched spaces V^j = V + W^1 + ... + W^j."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .multiscale import LODProblem, MultiscaleSpace, _columns_to_csc, _is_inf


def enrich_once(problem: LODProblem, K: int, ell, v) -> np.ndarray:
    """D^ell_K v: energy-orthogonal kernel correction on N^ell(K).

    Solves a(x, w) = -(v, w) for all w in H^1_0(N^ell(K)) with Pi_H w = 0,
    subject to Pi_H x = 0.  ``v`` is a full free-dof vector; the result is
    returned in the same coordinates and vanishes outside the patch.
    """
    elements = problem.patch_elements(K, ell)
    ps, rows, S = problem.solver(elements)
    v = np.asarray(v, dtype=float)
    b = -(problem.M @ v)[ps.dofs]
    x, _ = S.solve(b, np.zeros((rows.size,) + v.shape[1:]))
    out = np.zeros(v.shape)
    out[ps.dofs] = x
    return out


@dataclass
class EnrichedSpace:
    base: MultiscaleSpace
    j: int
    corrections: list = field(default_factory=list)  # per nu: sparse (n_fine x n_ms)

    @property
    def problem(self) -> LODProblem:
        return self.base.problem

    @property
    def basis(self) -> sp.csc_matrix:
        if self.j == 0:
            return self.base.basis
        return sp.csc_matrix(sp.hstack([self.base.basis] + self.corrections, format="csc"))

    @property
    def n_ms(self) -> int:
        return (self.j + 1) * self.base.n_ms


def resolve_j(j, p: int) -> int:
    """``"auto"`` means ceil(p/2)."""
    if j == "auto":
        return math.ceil(p / 2)
    j = int(j)
    if j < 0:
        raise ValueError("enrichment level must be >= 0")
    return j


def build_enriched_space(ms: MultiscaleSpace, j) -> EnrichedSpace:
    """Apply D^ell_K repeatedly to every base function, always on the fixed patch N^ell(K)."""
    pr = ms.problem
    j = resolve_j(j, pr.p)
    es = EnrichedSpace(ms, j)
    if j == 0:
        return es
    cs = pr.coarse
    n = pr.fine.n_dofs
    ell = math.inf if ms.strategy == "ideal" else ms.ell
    current = ms.basis
    for _ in range(j):
        cols = []
        for K in range(cs.mesh.num_elements):
            block = current[:, K * cs.M:(K + 1) * cs.M].toarray()
            x = enrich_once(pr, K, ell, block)
            dofs = pr.support_dofs(pr.patch_elements(K, ell))
            for i in range(cs.M):
                cols.append((dofs, x[dofs, i]))
        current = _columns_to_csc(n, cols)
        es.corrections.append(current)
    return es


def q_expansion_initial(u0, v0, es: EnrichedSpace):
    """Reduced initial coefficients; only zero data is supported."""
    for name, d in (("u0", u0), ("v0", v0)):
        if d is not None and np.any(np.asarray(d) != 0):
            raise NotImplementedError(
                f"nonzero initial data {name} requires the compatibility recursion for well-prepared data, "
                "which is not implemented; use zero initial conditions"
            )
    n = es.n_ms
    return np.zeros(n), np.zeros(n)
