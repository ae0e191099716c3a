import numpy as np
import pytest
from math import factorial
from scipy.sparse.linalg import eigsh

from varexp.errors import LevelMismatch, MeshError
from varexp.mesh_fem import (TRIANGLE_RULES, FEFunction, build_mesh_hierarchy, fe_space,
                             interpolate, l2_inner, nodal_symmetric_gradient, prolong,
                             symmetric_gradient)


@pytest.fixture(scope="module")
def square():
    return build_mesh_hierarchy("unit_square", 4)


def random_fe(mesh, rng):
    return FEFunction(mesh, rng.standard_normal((mesh.n_interior, 2)))


def test_hierarchy_counts(square):
    assert (square[0].n_triangles, square[0].n_vertices, square[0].n_interior) == (2, 4, 0)
    for L, m in enumerate(square):
        assert m.n_vertices == (2**L + 1) ** 2
        assert m.n_interior == max(2**L - 1, 0) ** 2
        assert m.n_triangles == 2 * 4**L
    assert (square[3].n_vertices, square[3].n_interior) == (81, 49)


def test_disk_containment_and_orientation():
    disk = build_mesh_hierarchy("disk(2.5)", 2)
    for m in disk:
        assert np.all(np.linalg.norm(m.vertices, axis=1) <= 2.5 + 1e-12)
        assert np.all(m.areas > 0)
    assert disk[1].measure == pytest.approx(disk[0].measure, rel=1e-14)


@pytest.mark.parametrize("bad", [dict(levels=0), dict(levels=9), dict(domain="disk(-1)"),
                                 dict(domain="hexagon")])
def test_bad_meshes(bad):
    kw = dict(domain="unit_square", levels=2) | bad
    with pytest.raises(MeshError):
        build_mesh_hierarchy(**kw)


@pytest.mark.parametrize("npts, order", [(1, 1), (3, 2), (7, 5)])
def test_triangle_rules_exact(npts, order):
    bary, w = TRIANGLE_RULES[npts]
    for i in range(order + 1):
        for j in range(order + 1 - i):
            q = 0.5 * np.sum(w * bary[:, 1] ** i * bary[:, 2] ** j)
            assert q == pytest.approx(factorial(i) * factorial(j) / factorial(i + j + 2), rel=1e-13)


def test_symmetric_gradient_examples(square):
    m = square[2]
    rot = nodal_symmetric_gradient(m, np.column_stack([m.vertices[:, 1], -m.vertices[:, 0]]))
    assert np.abs(rot).max() < 1e-13
    e = nodal_symmetric_gradient(m, np.column_stack([m.vertices[:, 0], 0 * m.vertices[:, 0]]))
    assert np.allclose(e, [[1, 0], [0, 0]], atol=1e-13)
    e = nodal_symmetric_gradient(m, np.column_stack([m.vertices[:, 1], 0 * m.vertices[:, 0]]))
    assert np.allclose(e, [[0, 0.5], [0.5, 0]], atol=1e-13)


def test_symmetric_gradient_field(square):
    rng = np.random.default_rng(0)
    u = random_fe(square[2], rng)
    f = symmetric_gradient(u)
    assert f.rank == "sym_tensor" and f.measure == pytest.approx(1.0)
    f7 = symmetric_gradient(u, rule=7)
    assert f7.measure == pytest.approx(1.0)


def test_l2_inner_properties(square):
    rng = np.random.default_rng(1)
    m = square[3]
    u, v = random_fe(m, rng), random_fe(m, rng)
    assert l2_inner(FEFunction.zero(m), FEFunction.zero(m)) == 0.0
    assert l2_inner(u, v) == pytest.approx(l2_inner(v, u), rel=1e-13)
    assert l2_inner(u, u) > 0
    with pytest.raises(LevelMismatch):
        l2_inner(u, random_fe(square[2], rng))


def test_l2_inner_against_seven_point_oracle(square):
    m = square[3]
    u = interpolate(m, lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]))
    space = fe_space(m, 7)
    vals = space.values_at_quadrature(u.vector())
    oracle = np.sum(space.q_weights * np.sum(vals**2, axis=2))
    assert l2_inner(u, u) == pytest.approx(oracle, abs=1e-12)


def test_mass_row_sums(square):
    space = fe_space(square[3])
    Mv = space.vertex_mass()
    lumped = np.zeros(square[3].n_vertices)
    np.add.at(lumped, square[3].triangles.ravel(), np.repeat(space.areas / 3, 3))
    assert np.allclose(np.asarray(Mv.sum(axis=1)).ravel(), lumped, atol=1e-15)
    assert Mv.sum() == pytest.approx(1.0, abs=1e-12)


def test_prolong_exact(square):
    rng = np.random.default_rng(2)
    u = random_fe(square[1], rng)
    v = prolong(u, square[3])
    pts = rng.uniform(0, 1, (200, 2))
    assert np.abs(u.evaluate(pts) - v.evaluate(pts)).max() <= 1e-13
    w = prolong(u, square[2])
    coarse_ids = np.flatnonzero(~square[1].boundary_mask)
    assert np.array_equal(w.vertex_values()[coarse_ids], u.coeffs)
    assert np.all(prolong(FEFunction.zero(square[1]), square[3]).coeffs == 0)
    assert l2_inner(v, v) == pytest.approx(l2_inner(u, u), rel=1e-12)
    with pytest.raises(LevelMismatch):
        prolong(v, square[1])


def test_prolong_preserves_symmetric_gradient(square):
    rng = np.random.default_rng(4)
    u = random_fe(square[2], rng)
    fine = prolong(u, square[3])
    ec = symmetric_gradient(u).values
    ef = symmetric_gradient(fine).values
    assert np.allclose(ef, ec[square[3].tri_parent], atol=1e-12)


@pytest.mark.parametrize("domain", ["unit_square", "disk(2.5)"])
def test_discrete_korn_rigidity(domain):
    mesh = build_mesh_hierarchy(domain, 3)[-1]
    space = fe_space(mesh)
    E = space.eps_basis
    local = np.einsum("tiab,tjab,t->tij", E, E, space.areas)
    K = space.scatter_matrix(local)
    lam = eigsh(K, k=1, M=space.mass, sigma=-1.0, which="LM", return_eigenvectors=False)[0]
    assert lam > 1e-3
