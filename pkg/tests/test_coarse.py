import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre

from ehlod.assembly import FineSpace, patch_space
from ehlod.coarse import (
    CoarseOperators,
    CoarseSpace,
    c_form,
    constraint_matrix,
    project_PiH,
    quasi_interpolate_IH,
)
from ehlod.mesh import MeshError, build_mesh, patch


def _gauss(q):
    x, w = legendre.leggauss(q)
    return 0.5 * (x + 1), 0.5 * w


@pytest.mark.parametrize("dim,p", [(1, 3), (2, 2)])
def test_element_mass_identity(dim, p):
    cs = CoarseSpace(build_mesh(dim, 4), p)
    s, w = _gauss(p + 2)
    H = cs.mesh.h
    K = 5 if dim == 2 else 1
    org = cs.mesh.element_origins[K]
    if dim == 1:
        pts = (org + H * s)[:, None]
        wts = H * w
    else:
        X, Y = np.meshgrid(s, s, indexing="xy")
        pts = org + H * np.stack([X.ravel(), Y.ravel()], axis=1)
        wts = H * H * np.outer(w, w).ravel()
    vals = np.stack([cs.evaluate(K, i, pts) for i in range(cs.M)])
    G = (vals * wts) @ vals.T
    assert np.allclose(G, np.eye(cs.M), atol=1e-13)


def test_dimension():
    assert CoarseSpace(build_mesh(2, 3), 2).dim == 9 * 9


def _ops(nc, nf, p, dim=1):
    return CoarseOperators(CoarseSpace(build_mesh(dim, nc), p), FineSpace(build_mesh(dim, nf)))


def test_constant_projection_exact():
    ops = _ops(4, 32, 2)
    c = ops.project(np.ones(33))
    expected = np.zeros((4, 3))
    expected[:, 0] = np.sqrt(0.25)
    assert np.allclose(c.reshape(4, 3), expected, atol=1e-14)


def test_linear_means_p0():
    ops = _ops(2, 16, 0)
    x = np.linspace(0, 1, 17)
    means = ops.project(x) / np.sqrt(0.5)
    assert np.allclose(means, [0.25, 0.75], atol=1e-14)


def test_sin_projection_quadrature_oracle():
    nf, nc, p = 2**10, 8, 1
    ops = _ops(nc, nf, p)
    xn = np.linspace(0, 1, nf + 1)
    v = np.sin(np.pi * xn)
    got = ops.project(v).reshape(nc, p + 1)
    # composite Gauss oracle of the fine interpolant against the Legendre basis
    s, w = _gauss(4)
    H, h = 1.0 / nc, 1.0 / nf
    oracle = np.zeros((nc, p + 1))
    for e in range(nf):
        x = (e + s) * h
        u = v[e] * (1 - s) + v[e + 1] * s
        K = e * nc // nf
        loc = (x - K * H) / H
        for k in range(p + 1):
            ck = np.zeros(k + 1)
            ck[k] = 1
            lam = np.sqrt((2 * k + 1) / H) * legendre.legval(2 * loc - 1, ck)
            oracle[K, k] += h * np.sum(w * u * lam)
    assert np.max(np.abs(got - oracle)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), nc=st.sampled_from([1, 2, 4, 8]))
def test_affine_projection_closed_form(a, b, nc):
    ops = _ops(nc, 8 * nc, 1)
    xn = np.linspace(0, 1, 8 * nc + 1)
    got = ops.project(a * xn + b).reshape(nc, 2)
    H = 1.0 / nc
    xm = (np.arange(nc) + 0.5) * H
    assert np.allclose(got[:, 0], np.sqrt(H) * (a * xm + b), atol=1e-12)
    assert np.allclose(got[:, 1], a * H**1.5 * np.sqrt(3) / 6, atol=1e-12)


def test_constraint_row_p0():
    ops = _ops(1, 4, 0)
    row = ops.C_nodes.toarray()[0]
    assert np.allclose(row, np.array([0.5, 1, 1, 1, 0.5]) * 0.25)
    assert np.isclose(row.sum(), 1.0)  # |K|^{1/2} with |K| = 1
    ops2 = _ops(4, 16, 0)
    assert np.isclose(ops2.C_nodes.toarray()[1].sum(), np.sqrt(0.25))


def test_constraint_full_rank_two_element_patch():
    coarse, fine = build_mesh(1, 4), build_mesh(1, 32)
    fs = FineSpace(fine)
    cs = CoarseSpace(coarse, 2)
    ps = patch_space(fs, coarse, patch(coarse, [1, 2], 0))
    C = constraint_matrix(cs, ps, fs).toarray()
    sv = np.linalg.svd(C, compute_uv=False)
    assert C.shape[0] == 6 and sv[-1] > 1e-8 * sv[0]
    assert np.all(C @ np.zeros(C.shape[1]) == 0)


def test_resolution_rejected():
    with pytest.raises(MeshError):
        _ops(4, 8, 2)
    with pytest.raises(ValueError):
        CoarseOperators(CoarseSpace(build_mesh(1, 2), 2), FineSpace(build_mesh(1, 8)), quad_pts=3)


def test_projection_misaligned_vector():
    with pytest.raises(MeshError):
        _ops(2, 8, 0).project(np.ones(5))


@pytest.mark.parametrize("dim", [1, 2])
def test_ih_constant(dim):
    nf = 16 if dim == 1 else 8
    fine, coarse = build_mesh(dim, nf), build_mesh(dim, 4)
    out = quasi_interpolate_IH(FineSpace(fine), coarse, np.full(fine.num_nodes, 2.5))
    # coarse nodal values: c at interior coarse nodes, 0 on the boundary
    r = nf // 4
    on_coarse = np.all(np.isclose((fine.node_coords * 4) % 1, 0), axis=1)
    xc = fine.node_coords[on_coarse]
    interior = np.all((xc > 0) & (xc < 1), axis=1)
    assert np.allclose(out[on_coarse][interior], 2.5)
    assert np.allclose(out[fine.boundary_nodes], 0.0)
    assert r > 1


def test_ih_linear_midpoint():
    fine = build_mesh(1, 16)
    out = quasi_interpolate_IH(FineSpace(fine), build_mesh(1, 2), np.linspace(0, 1, 17))
    assert np.isclose(out[8], 0.5)


def _ih_oracle(v, nf, nc):
    """Element means by the trapezoid rule, averaged to coarse nodes, interpolated to the fine grid."""
    h = 1.0 / nf
    r = nf // nc
    fine_means = 0.5 * (v[:-1] + v[1:])
    means = fine_means.reshape(nc, r).mean(axis=1)
    nodal = np.zeros(nc + 1)
    nodal[1:-1] = 0.5 * (means[:-1] + means[1:])
    return np.interp(np.arange(nf + 1) * h, np.linspace(0, 1, nc + 1), nodal)


def test_ih_oracle_and_not_projection():
    nf, nc = 32, 4
    v = np.random.default_rng(4).standard_normal(nf + 1)
    fs = FineSpace(build_mesh(1, nf))
    Iv = quasi_interpolate_IH(fs, build_mesh(1, nc), v)
    assert np.allclose(Iv, _ih_oracle(v, nf, nc), atol=1e-14)
    again = quasi_interpolate_IH(fs, build_mesh(1, nc), v - Iv)
    assert np.linalg.norm(again) > 1e-3


def test_c_form_zero_and_linear():
    fine, coarse = build_mesh(1, 32), build_mesh(1, 4)
    cs = CoarseSpace(coarse, 2)
    fs = FineSpace(fine)
    assert np.all(c_form(cs, fs, np.zeros(fine.num_nodes), 1) == 0)
    x = np.linspace(0, 1, 33)
    assert np.max(np.abs(c_form(cs, fs, x, 1))) <= 1e-12
    assert np.max(np.abs(c_form(cs, fs, x, 2))) <= 1e-12
    with pytest.raises(MeshError):
        c_form(cs, fs, x, 4)


def test_c_form_quadrature_oracle():
    nf, nc, p, K = 32, 4, 2, 1
    cs = CoarseSpace(build_mesh(1, nc), p)
    fs = FineSpace(build_mesh(1, nf))
    v = np.random.default_rng(11).standard_normal(nf + 1)
    d = v - _ih_oracle(v, nf, nc)
    s, w = _gauss(6)
    h, H = 1.0 / nf, 1.0 / nc
    oracle = np.zeros(p + 1)
    for e in range(K * nf // nc, (K + 1) * nf // nc):
        x = (e + s) * h
        u = d[e] * (1 - s) + d[e + 1] * s
        for k in range(p + 1):
            oracle[k] += h * np.sum(w * u * cs.evaluate(K, k, x[:, None]))
    assert np.max(np.abs(c_form(cs, fs, v, K) - oracle)) <= 1e-12


def test_module_level_projection_matches_operator():
    cs = CoarseSpace(build_mesh(2, 2), 1)
    fs = FineSpace(build_mesh(2, 8))
    v = np.random.default_rng(0).standard_normal(fs.n_dofs)
    assert np.allclose(project_PiH(cs, fs, v), CoarseOperators(cs, fs).project(v))
