import numpy as np
import pytest
from scipy.optimize import nnls

from esdg.operators import (OperatorError, build_reference_operators, dump_operators,
                            verify_operators)
from esdg.refelem import QuadratureRule, reference_element


@pytest.mark.parametrize("dim,N", [(2, n) for n in range(7)] + [(3, n) for n in range(7)])
def test_identities(dim, N):
    ops = build_reference_operators(dim, N)
    rep = verify_operators(ops)
    assert rep["sbp"] < 1e-12
    assert rep["nullspace"] < 1e-12
    assert rep["polynomial_exactness"] < 1e-12
    assert rep["projection"] < 1e-12


def test_linear_mass_is_identity():
    ops = build_reference_operators(2, 1)
    assert np.abs(ops.M - np.eye(3)).max() < 1e-14


@pytest.mark.parametrize("dim", [2, 3])
def test_definitions(dim, rng):
    ops = build_reference_operators(dim, 3)
    Minv = np.linalg.inv(ops.M)
    assert np.abs(ops.Pq - Minv @ ops.Vq.T * ops.wq).max() < 1e-12
    assert np.abs(ops.Lq - Minv @ ops.Vf.T * ops.wf).max() < 1e-12
    vf = rng.standard_normal(ops.Nqf)
    assert np.abs(ops.M.T @ (ops.Lq @ vf) - ops.Vf.T @ (ops.wf * vf)).max() < 1e-13
    assert np.abs(ops.Pq @ ops.Vq - np.eye(ops.Np)).max() < 1e-13
    assert np.abs(Minv @ ops.M - np.eye(ops.Np)).max() < 1e-12


def test_face_face_block():
    ops = build_reference_operators(2, 2)
    elem = reference_element(2)
    nJ = np.repeat(elem.normals * elem.face_jacobians[:, None], ops.nfq, axis=0)
    for i in range(2):
        assert np.allclose(ops.Dff[i], 0.5 * nJ[:, i])
        S = ops.SN(i)
        assert np.abs(S[ops.Nq:, ops.Nq:]).max() == 0.0


def test_random_polynomial_exactness(rng):
    ops = build_reference_operators(3, 2)
    for _ in range(10):
        c = rng.standard_normal(ops.Np)
        for i in range(3):
            lhs = ops.DN(i) @ ops.VN @ c
            rhs = np.concatenate([ops.Vq @ ops.D[i] @ c, np.zeros(ops.Nqf)])
            assert np.abs(lhs - rhs).max() < 1e-12


def test_degree_zero():
    ops = build_reference_operators(2, 0)
    assert np.all(ops.D[0] == 0) and np.all(ops.D[1] == 0)
    assert max(verify_operators(ops).values()) < 1e-14


def _nnls_rule(dim, degree, rng, npts=400):
    """Positive rule exact only up to ``degree``, from random interior points."""
    lam = rng.dirichlet(np.ones(dim + 1), npts)
    pts = lam @ reference_element(dim).vertices
    exps = [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]
    A = np.array([pts[:, 0] ** a * pts[:, 1] ** b for a, b in exps])
    exact = build_reference_operators(2, degree)  # any rule exact to 2*degree+1
    q = exact.quad
    rhs = np.array([np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
                    for a, b in exps])
    w, res = nnls(A, rhs)
    assert res < 1e-10
    keep = w > 0
    return QuadratureRule(pts[keep], w[keep], degree)


def test_weakened_volume_rule_flagged(rng):
    N = 3
    rule = _nnls_rule(2, 2 * N - 2, rng)
    with pytest.raises(OperatorError, match="2N-1"):
        build_reference_operators(2, N, vol_rule=rule)
    ops = build_reference_operators(2, N, vol_rule=rule, check=False)
    assert verify_operators(ops)["sbp"] > 1e-8


def test_weak_face_rule_rejected():
    with pytest.raises(OperatorError):
        build_reference_operators(2, 3, face_degree=5)


def test_dump(tmp_path):
    ops = build_reference_operators(2, 2)
    files = dump_operators(ops, tmp_path)
    names = {f.name for f in files}
    assert {"M.csv", "Pq.csv", "DN1.csv", "QN2.csv"} <= names
    M = np.loadtxt(tmp_path / "M.csv", delimiter=",")
    assert np.array_equal(M, ops.M)  # 17 digits round-trip exactly
    text = (tmp_path / "M.csv").read_bytes()
    assert b"\r" not in text
