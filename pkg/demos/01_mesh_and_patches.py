"""
Meshes, element numbering and patches
=====================================

A Cartesian mesh of the unit square (or interval) is described by its
dimension and the number of elements per direction.  Elements are numbered
lexicographically with x fastest, and a patch N^ell(S) grows a set of
elements by ell layers of vertex neighbours.
"""
import math

import numpy as np

from ehlod import build_mesh, fine_elements_in, patch, refine_ratio

coarse = build_mesh(2, 8)
fine = build_mesh(2, 64)
print("H =", coarse.h, " h =", fine.h, " refinement ratio =", refine_ratio(coarse, fine))

# %%
# Element 27 sits at column 3, row 3.  Its first patch holds the 3x3 block
# around it, the second a 5x5 block, and so on until the domain is covered.
K = coarse.element_index(3, 3)
for ell in (0, 1, 2, 3, math.inf):
    P = patch(coarse, [K], ell)
    print(f"ell={ell}: {len(P.elements)} elements, global={P.is_global}")

# %%
# A small picture of N^2(K) on the coarse grid.
grid = np.full((coarse.n, coarse.n), ".")
for e in patch(coarse, [K], 2).elements:
    ix, iy = coarse.element_multi_index(e)
    grid[iy, ix] = "o"
grid[3, 3] = "K"
print("\n".join(" ".join(row) for row in grid[::-1]))

# %%
# Every coarse element contains ratio**dim fine elements.
inside = fine_elements_in(K, coarse, fine)
print("fine elements inside K:", len(inside))
