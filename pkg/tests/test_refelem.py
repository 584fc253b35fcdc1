from functools import lru_cache

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from esdg.refelem import (eval_basis, interp_matrix, interpolation_nodes, nodal_vandermonde,
                          num_face_modes, num_modes, reference_element, simplex_quadrature)


@lru_cache(maxsize=None)
def exact_monomial(exps):
    """Symbolic integral of x^a y^b (z^c) over the bi-unit simplex."""
    x, y, z = sp.symbols("x y z")
    if len(exps) == 2:
        a, b = exps
        return float(sp.integrate(x ** a * y ** b, (y, -1, -x), (x, -1, 1)))
    a, b, c = exps
    inner = sp.integrate(x ** a * y ** b * z ** c, (z, -1, -1 - x - y))
    return float(sp.integrate(inner, (y, -1, -x), (x, -1, 1)))


def test_weights_sum_to_measure():
    assert simplex_quadrature(2, 0).weights.sum() == pytest.approx(2.0, abs=1e-14)
    assert simplex_quadrature(3, 0).weights.sum() == pytest.approx(4.0 / 3.0, abs=1e-14)


def test_x2y2_degree9_rule():
    q = simplex_quadrature(2, 9)
    val = np.sum(q.weights * q.points[:, 0] ** 2 * q.points[:, 1] ** 2)
    assert abs(val - exact_monomial((2, 2))) < 1e-12 * abs(exact_monomial((2, 2)))


@settings(max_examples=40, deadline=None)
@given(dim=st.sampled_from([2, 3]), degree=st.integers(1, 8), data=st.data())
def test_quadrature_exactness(dim, degree, data):
    q = simplex_quadrature(dim, degree)
    assert q.exactness_degree >= degree
    assert np.all(q.weights > 0)
    exps = []
    left = q.exactness_degree
    for _ in range(dim):
        e = data.draw(st.integers(0, left))
        exps.append(e)
        left -= e
    val = np.sum(q.weights * np.prod(q.points ** np.array(exps), axis=1))
    ref = exact_monomial(tuple(exps))
    assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref))


def test_quadrature_bad_dim():
    with pytest.raises(ValueError):
        simplex_quadrature(4, 2)


def test_reference_element_normals_and_measure():
    for dim in (2, 3):
        e = reference_element(dim)
        assert np.allclose(np.linalg.norm(e.normals, axis=1), 1.0)
        assert e.measure == (2.0 if dim == 2 else 4.0 / 3.0)


def test_constant_mode():
    V, _ = eval_basis(2, 0, np.array([[0.0, -0.5], [-1.0, -1.0]]))
    assert np.allclose(V, 1.0 / np.sqrt(2.0))


@pytest.mark.parametrize("dim,N", [(2, n) for n in range(7)] + [(3, n) for n in range(5)])
def test_orthonormal(dim, N):
    q = simplex_quadrature(dim, 2 * N)
    V, _ = eval_basis(dim, N, q.points)
    assert V.shape[1] == num_modes(dim, N)
    assert np.abs(V.T @ (q.weights[:, None] * V) - np.eye(V.shape[1])).max() < 1e-12


@pytest.mark.parametrize("dim", [2, 3])
def test_gradient_finite_difference(dim, rng):
    N = 4
    lam = 0.1 + 0.6 * rng.dirichlet(np.ones(dim + 1), 5)
    x = (lam / lam.sum(axis=1, keepdims=True)) @ reference_element(dim).vertices
    _, dV = eval_basis(dim, N, x)
    def fd_error(eps):
        errs = []
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = eps
            fd = (eval_basis(dim, N, x + e)[0] - eval_basis(dim, N, x - e)[0]) / (2 * eps)
            errs.append(np.abs(fd - dV[i]).max())
        return max(errs)

    e1, e2 = fd_error(1e-3), fd_error(5e-4)
    assert e1 < 1e-3
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_basis_errors():
    with pytest.raises(ValueError):
        eval_basis(2, -1, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        eval_basis(2, 2, np.array([[0.5, 0.6]]))
    eval_basis(2, 2, np.array([[1.0 + 1e-11, -1.0]]))  # within tolerance


def test_linear_nodes_are_vertices():
    nodes = interpolation_nodes(2, 1).nodes
    verts = reference_element(2).vertices
    assert sorted(map(tuple, np.round(nodes, 14))) == sorted(map(tuple, verts))


def test_cubic_node_counts():
    ns = interpolation_nodes(2, 3)
    assert len(ns.nodes) == 10
    assert all(len(f) == 4 for f in ns.face_node_ids)


@pytest.mark.parametrize("dim,N", [(2, n) for n in range(1, 10)] + [(3, n) for n in range(1, 7)])
def test_node_set_invariants(dim, N):
    ns = interpolation_nodes(dim, N)
    elem = reference_element(dim)
    assert len(ns.nodes) == num_modes(dim, N)
    for f, ids in zip(elem.faces, ns.face_node_ids):
        assert len(ids) == num_face_modes(dim, N)
        # on the face plane: n . (x - v0) = 0
        n = elem.normals[elem.faces.index(f)]
        d = (ns.nodes[ids] - elem.vertices[f[0]]) @ n
        assert np.abs(d).max() < 1e-12
    assert np.isfinite(np.linalg.cond(nodal_vandermonde(dim, N)))


def test_face_vandermonde_invertible():
    for dim, N in ((2, 4), (3, 3)):
        ns = interpolation_nodes(dim, N)
        elem = reference_element(dim)
        for f, ids in zip(elem.faces, ns.face_node_ids):
            # degree-N monomials in face coordinates evaluated at the face nodes
            pts = ns.nodes[ids]
            t = pts[:, :] - elem.vertices[f[0]]
            axes = [elem.vertices[v] - elem.vertices[f[0]] for v in f[1:]]
            coords = np.linalg.lstsq(np.array(axes).T, t.T, rcond=None)[0].T
            if dim == 2:
                A = np.column_stack([coords[:, 0] ** k for k in range(N + 1)])
            else:
                A = np.column_stack([coords[:, 0] ** a * coords[:, 1] ** b
                                     for a in range(N + 1) for b in range(N + 1 - a)])
            assert np.linalg.matrix_rank(A) == num_face_modes(dim, N)


def test_quadratic_interpolation_exact(rng):
    nodes = interpolation_nodes(3, 2).nodes
    lam = rng.dirichlet(np.ones(4), 20)
    pts = lam @ reference_element(3).vertices
    I = interp_matrix(3, 2, pts)
    for a in range(3):
        for b in range(3 - a):
            for c in range(3 - a - b):
                f = lambda x: x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c  # noqa: E731
                assert np.abs(I @ f(nodes) - f(pts)).max() < 1e-10


def test_node_degree_range():
    with pytest.raises(ValueError):
        interpolation_nodes(2, 0)
    with pytest.raises(ValueError):
        interpolation_nodes(2, 10)
