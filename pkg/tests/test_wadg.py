from types import SimpleNamespace

import numpy as np
import pytest
import sympy as sp

from esdg.geometry import curve_nodes, generate_box_mesh, geometric_factors, mesh_size, place_nodes
from esdg.operators import build_reference_operators
from esdg.refelem import eval_basis
from esdg.wadg import (MassError, apply_inverse_mass, apply_mass, build_element_mass_ops,
                       conservation_correction, project, project_entropy_vars,
                       projection_difference_study, weighted_integral)


def fake_geo(ops, J):
    J = np.atleast_2d(J)
    return SimpleNamespace(Jq=J, Jf=np.ones((J.shape[0], ops.Nqf)))


def strong_warp(x):
    x1, x2 = x[..., 0], x[..., 1]
    d = 0.15 * np.sin(np.pi * (x1 + 1) / 2) * np.sin(np.pi * (x2 + 1) / 2)
    return np.stack([x1 + d + 0.1 * x2 ** 2, x2 + 0.5 * d * x1], -1)


def warped(N, n, warp=strong_warp):
    ops = build_reference_operators(2, N)
    m = curve_nodes(place_nodes(generate_box_mesh(2, [(-1, 1)] * 2, [n, n], False), N), warp)
    return ops, geometric_factors(m, ops)


def test_unit_weight():
    ops = build_reference_operators(2, 3)
    J = np.ones((1, ops.Nq))
    wadg = build_element_mass_ops(ops, fake_geo(ops, J), "wadg", "none")
    weighted = build_element_mass_ops(ops, fake_geo(ops, J), "weighted", "none")
    b = np.random.default_rng(0).standard_normal((1, 4, ops.Np))
    assert np.abs(apply_inverse_mass(wadg, b) - b @ np.linalg.inv(ops.M).T).max() < 1e-13
    assert np.abs(apply_mass(weighted, np.eye(ops.Np)[None]) - ops.M).max() < 1e-13


def test_constant_weight_two():
    ops = build_reference_operators(2, 2)
    emo = build_element_mass_ops(ops, fake_geo(ops, np.full(ops.Nq, 2.0)), "wadg", "polyJ")
    b = np.random.default_rng(1).standard_normal((1, ops.Np))
    assert np.abs(apply_inverse_mass(emo, b) - np.linalg.solve(ops.M, b[0]) / 2).max() < 1e-14


def test_linear_jacobian_symbolic():
    ops = build_reference_operators(2, 1)
    x, y = sp.symbols("x y")
    # express the degree-1 orthonormal basis in monomials from three samples
    pts = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    V, _ = eval_basis(2, 1, pts)
    A = np.column_stack([np.ones(3), pts])
    coef = np.linalg.solve(A, V)
    phi = [sp.nsimplify(c[0], rational=False) + c[1] * x + c[2] * y for c in coef.T]
    Jsym = 1 + sp.Rational(1, 2) * x + sp.Rational(1, 4) * y
    Jq = 1 + 0.5 * ops.quad.points[:, 0] + 0.25 * ops.quad.points[:, 1]
    emo = build_element_mass_ops(ops, fake_geo(ops, Jq), "weighted", "none")
    Mk = apply_mass(emo, np.eye(3)[None])[0]
    for i in range(3):
        for j in range(3):
            ref = float(sp.integrate(phi[i] * phi[j] * Jsym, (y, -1, -x), (x, -1, 1)))
            assert abs(Mk[i, j] - ref) < 1e-13


def test_storage_audit():
    ops, geo = warped(3, 2)
    emo = build_element_mass_ops(ops, geo, "wadg")
    assert emo.storage() == ops.Nq + ops.Nqf
    assert emo.chol is None


def test_weighted_inverse_consistency(rng):
    ops, geo = warped(3, 2)
    emo = build_element_mass_ops(ops, geo, "weighted", "none")
    c = rng.standard_normal((geo.J.shape[0], 4, ops.Np))
    assert np.abs(apply_inverse_mass(emo, apply_mass(emo, c)) - c).max() < 1e-12


def test_wadg_operator_symmetric():
    ops, geo = warped(2, 2)
    emo = build_element_mass_ops(ops, geo, "wadg", "none")
    A = apply_inverse_mass(emo, np.broadcast_to(np.eye(ops.Np), (geo.J.shape[0],) + (ops.Np,) * 2))
    assert np.abs(A - np.swapaxes(A, 1, 2)).max() < 1e-12


def test_wadg_inverse_converges_to_weighted():
    N = 2
    errs, hs = [], []
    for n in (4, 8, 16):
        ops, geo = warped(N, n)
        c = np.exp(geo.xq[..., 0]) @ ops.Pq.T  # polynomial coefficients of a smooth field
        ex = build_element_mass_ops(ops, geo, "weighted", "none")
        wa = build_element_mass_ops(ops, geo, "wadg", "none")
        b = apply_mass(ex, c)
        diff = apply_inverse_mass(wa, b) - c
        errs.append(np.sqrt(np.sum(weighted_integral(ex, (diff @ ops.Vq.T) ** 2 @ ops.Pq.T))))
        hs.append(mesh_size(geo))
    rate = np.log(errs[-2] / errs[-1]) / np.log(hs[-2] / hs[-1])
    assert rate >= N + 1.5


def test_weighted_projection_reproduces_polynomials(rng):
    ops, geo = warped(3, 2)
    emo = build_element_mass_ops(ops, geo, "weighted", "none")
    c = rng.standard_normal((geo.J.shape[0], 2, ops.Np))
    vals = c @ ops.Vq.T
    assert np.abs(project(emo, vals) - c).max() < 1e-11
    v_h, vt = project_entropy_vars(emo, vals)
    assert vt.shape[-1] == ops.Nq + ops.Nqf
    assert np.abs(vt - c @ ops.VN.T).max() < 1e-11


def test_wadg_projection_reproduces_polynomials_on_affine(rng):
    ops = build_reference_operators(2, 3)
    m = place_nodes(generate_box_mesh(2, [(0, 1), (0, 2)], [2, 2], False), 3)
    geo = geometric_factors(m, ops)
    emo = build_element_mass_ops(ops, geo, "wadg", "polyJ")
    c = rng.standard_normal((m.K, 2, ops.Np))
    assert np.abs(project(emo, c @ ops.Vq.T) - c).max() < 1e-12


def test_wadg_projection_of_polynomials_superconverges():
    # on curved elements the weight-adjusted projection of u in P^N is
    # u + O(h^{N+2}) in L2, not u itself
    N = 3
    errs, hs = [], []
    for n in (4, 8):
        ops, geo = warped(N, n)
        emo = build_element_mass_ops(ops, geo, "wadg", "polyJ")
        u = np.exp(geo.xq[..., 0]) + geo.xq[..., 1]
        c = project(build_element_mass_ops(ops, geo, "weighted", "none"), u)
        d = (project(emo, c @ ops.Vq.T) - c) @ ops.Vq.T
        errs.append(np.sqrt(np.sum(d * d * geo.Jq * ops.wq)))
        hs.append(mesh_size(geo))
    assert 0 < errs[-1] < errs[0]
    assert np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1]) >= N + 1.5


def test_projections_agree_for_unit_jacobian(rng):
    ops = build_reference_operators(2, 3)
    geo = fake_geo(ops, np.ones((2, ops.Nq)))
    vals = rng.standard_normal((2, ops.Nq))
    a = project(build_element_mass_ops(ops, geo, "weighted", "none"), vals)
    b = project(build_element_mass_ops(ops, geo, "wadg", "none"), vals)
    assert np.abs(a - b).max() < 1e-13


def test_constants_preserved():
    ops, geo = warped(3, 4)
    for mode, fix in (("weighted", "none"), ("wadg", "polyJ")):
        emo = build_element_mass_ops(ops, geo, mode, fix)
        out = project(emo, np.full((geo.J.shape[0], ops.Nq), 1.7))
        assert np.abs(out @ ops.Vq.T - 1.7).max() < 1e-13


def test_polyJ_conservation_lemma(rng):
    ops, geo = warped(3, 2)
    emo = build_element_mass_ops(ops, geo, "wadg", "polyJ")
    u = rng.standard_normal((geo.J.shape[0], ops.Np))
    lhs = apply_mass(emo, u) @ emo.c1
    rhs = np.sum((u @ ops.Vq.T) * emo.Jw * ops.wq, axis=1)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_conservation_correction_basics(rng):
    ops, geo = warped(3, 2)
    emo = build_element_mass_ops(ops, geo, "wadg", "none")
    K = geo.J.shape[0]
    u = rng.standard_normal((K, ops.Np))
    f = (u @ ops.Vq.T) * emo.J  # already consistent with u
    assert np.abs(conservation_correction(emo, f, u) - u).max() < 1e-13
    ones = conservation_correction(emo, emo.J, np.zeros((K, ops.Np)))
    assert np.allclose(weighted_integral(emo, ones), emo.volume, rtol=1e-13)


def test_conservation_correction_rate():
    N = 3
    corr, hs = [], []
    for n in (4, 8, 16):
        ops, geo = warped(N, n)
        emo = build_element_mass_ops(ops, geo, "wadg", "none")
        f = np.exp(np.sin(2 * geo.xq[..., 0]) + geo.xq[..., 1]) * geo.Jq
        u = apply_inverse_mass(emo, (f * ops.wq) @ ops.Vq)
        shift = conservation_correction(emo, f, u) - u
        corr.append(np.abs(shift[:, 0] / emo.c1[0]).max())
        hs.append(mesh_size(geo))
    rate = np.log(corr[-2] / corr[-1]) / np.log(hs[-2] / hs[-1])
    assert rate >= 2 * N + 0.5


def test_errors():
    ops = build_reference_operators(2, 2)
    bad = np.ones((1, ops.Nq))
    bad[0, 0] = -1.0
    with pytest.raises(MassError, match="element 0"):
        build_element_mass_ops(ops, fake_geo(ops, bad))
    with pytest.raises(MassError):
        build_element_mass_ops(ops, fake_geo(ops, np.ones(ops.Nq)), mode="lumped")
    emo = build_element_mass_ops(ops, fake_geo(ops, np.ones(ops.Nq)))
    with pytest.raises(MassError):
        project(emo, np.ones((1, ops.Nq)), mode="bogus")


def test_constant_function_study():
    rows = projection_difference_study(2, cells=(2, 4), test_function="constant")
    for r in rows:
        assert max(r["err_l2proj"], r["err_wadg"], r["err_diff"]) < 1e-13
