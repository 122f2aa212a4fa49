import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehlod.mesh import CartesianMesh, MeshError, build_mesh, coarse_of_fine, fine_elements_in, patch, refine_ratio


def test_counts_1d():
    m = build_mesh(1, 4)
    assert m.num_elements == 4
    assert m.num_nodes == 5


def test_counts_2d():
    m = build_mesh(2, 3)
    assert m.num_elements == 9
    assert m.num_nodes == 16


@pytest.mark.parametrize("dim,n", [(3, 2), (0, 4), (1, 0), (2, -1)])
def test_build_mesh_rejects(dim, n):
    with pytest.raises(MeshError):
        build_mesh(dim, n)


def test_element_vertices_on_lattice():
    m = build_mesh(2, 4)
    x = m.node_coords[m.element_nodes]  # (ne, 4, 2)
    assert np.allclose(x * 4, np.round(x * 4))
    # each element spans exactly one cell
    assert np.allclose(x.max(axis=1) - x.min(axis=1), 0.25)


def test_refine_ratio():
    assert refine_ratio(build_mesh(1, 4), build_mesh(1, 16)) == 4
    assert refine_ratio(build_mesh(1, 8), build_mesh(1, 8192)) == 1024
    with pytest.raises(MeshError):
        refine_ratio(build_mesh(1, 4), build_mesh(1, 6))


def test_patch_examples():
    m = build_mesh(1, 8)
    assert set(patch(m, {4}, 1).elements) == {3, 4, 5}
    assert set(patch(m, {0}, 2).elements) == {0, 1, 2}
    m2 = build_mesh(2, 5)
    center = int(m2.element_index(2, 2))
    block = {int(m2.element_index(i, j)) for i in (1, 2, 3) for j in (1, 2, 3)}
    assert set(patch(m2, {center}, 1).elements) == block


def test_patch_zero_and_global():
    m = build_mesh(2, 4)
    assert patch(m, {5}, 0).elements == (5,)
    p = patch(m, {5}, np.inf)
    assert p.is_global and len(p) == 16


def test_patch_invalid_index():
    with pytest.raises(MeshError):
        patch(build_mesh(1, 4), {4}, 1)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 40), k=st.integers(0, 39), ell=st.integers(0, 6))
def test_patch_1d_size_and_monotone(n, k, ell):
    k = k % n
    m = build_mesh(1, n)
    p = set(patch(m, {k}, ell).elements)
    assert p == set(range(max(0, k - ell), min(n, k + ell + 1)))
    assert p <= set(patch(m, {k}, ell + 1).elements)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 9), k=st.integers(0, 80), ell=st.integers(0, 3))
def test_patch_recursion_2d(n, k, ell):
    m = build_mesh(2, n)
    k = k % m.num_elements
    step = set(patch(m, patch(m, {k}, ell).elements, 1).elements)
    assert step == set(patch(m, {k}, ell + 1).elements)


def test_fine_elements_in():
    assert set(fine_elements_in(0, build_mesh(1, 2), build_mesh(1, 8)).tolist()) == {0, 1, 2, 3}
    c, f = build_mesh(2, 2), build_mesh(2, 4)
    got = fine_elements_in(0, c, f)
    assert len(got) == 4
    assert np.all(f.element_origins[got] < 0.5)


def test_fine_elements_partition():
    c, f = build_mesh(2, 3), build_mesh(2, 12)
    allf = np.concatenate([fine_elements_in(K, c, f) for K in range(c.num_elements)])
    assert sorted(allf.tolist()) == list(range(f.num_elements))
    assert np.array_equal(coarse_of_fine(c, f)[allf], np.repeat(np.arange(9), 16))


def test_fine_elements_misaligned():
    with pytest.raises(MeshError):
        fine_elements_in(0, build_mesh(1, 3), build_mesh(1, 8))
