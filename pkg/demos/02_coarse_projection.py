"""
The discontinuous coarse space and the projection Pi_H
======================================================

The coarse space holds discontinuous tensor polynomials of degree p on each
coarse element, with an L2-orthonormal Legendre basis.  Pi_H is the L2
projection onto it.  On the fine P1 space it is the constraint matrix C:
the coefficients of Pi_H v are simply C @ v.
"""
import numpy as np

from ehlod import CoarseOperators, CoarseSpace, FineSpace, assemble_mass, build_mesh

fine = FineSpace(build_mesh(1, 512))
M = assemble_mass(fine)
x = fine.mesh.node_coords[fine.free_nodes, 0]
v = np.sin(3 * np.pi * x) * np.exp(x)

# %%
# Because the basis is orthonormal, Pythagoras gives the projection error
# without ever evaluating the discontinuous function:
#     ||v - Pi_H v||^2 = ||v||^2 - |C v|^2
for p in (0, 1, 2, 3):
    errs = []
    for n in (4, 8, 16, 32):
        ops = CoarseOperators(CoarseSpace(build_mesh(1, n), p), fine)
        c = ops.project(v)
        errs.append(np.sqrt(max(v @ (M @ v) - c @ c, 0.0)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    print(f"p={p}: L2 errors", " ".join(f"{e:.2e}" for e in errs), " rates", np.round(rates, 2))

# %%
# The rate is p+1 until the fine P1 representation of v itself limits it.
# Each coarse element carries (p+1)**dim coefficients.
ops = CoarseOperators(CoarseSpace(build_mesh(2, 4), 2), FineSpace(build_mesh(2, 32)))
print("2D, p=2:", ops.C.shape[0], "constraints on", ops.C.shape[1], "fine dofs")
