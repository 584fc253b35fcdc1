"""Reference mass, projection, lift and decoupled SBP operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .refelem import (QuadratureRule, ReferenceElement, eval_basis,
                      face_quadrature, reference_element, simplex_quadrature)

BUILD_TOL = 1e-10


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceOperators:
    """Quadrature-based operators on the reference simplex.

    Volume points come first and surface points second in every
    "hybrid" (volume + surface) vector used by the decoupled operators.
    """

    dim: int
    N: int
    elem: ReferenceElement
    quad: QuadratureRule
    face_rule: QuadratureRule
    face_points: np.ndarray
    wq: np.ndarray
    wf: np.ndarray
    Vq: np.ndarray
    Vf: np.ndarray
    M: np.ndarray
    M_chol: tuple
    Pq: np.ndarray
    Lq: np.ndarray
    D: list
    nhatJ: np.ndarray  # (dim, Nqf): n_hat_i * Jhat_f at face points
    Jhat_f: np.ndarray
    Dqq: list
    Dqf: list
    Dfq: list
    Dff: list  # diagonals

    @property
    def Np(self) -> int:
        return self.Vq.shape[1]

    @property
    def Nq(self) -> int:
        return self.Vq.shape[0]

    @property
    def Nqf(self) -> int:
        return self.Vf.shape[0]

    @property
    def nfq(self) -> int:
        return self.face_rule.num_points

    @property
    def VN(self) -> np.ndarray:
        return np.vstack([self.Vq, self.Vf])

    @property
    def WN(self) -> np.ndarray:
        return np.concatenate([self.wq, self.wf])

    def DN(self, i: int) -> np.ndarray:
        """Dense decoupled SBP matrix (for checks and dumps only)."""
        return np.block([[self.Dqq[i], self.Dqf[i]],
                         [self.Dfq[i], np.diag(self.Dff[i])]])

    def QN(self, i: int) -> np.ndarray:
        return self.WN[:, None] * self.DN(i)

    def BN(self, i: int) -> np.ndarray:
        return np.diag(np.concatenate([np.zeros(self.Nq), self.wf * self.nhatJ[i]]))

    def SN(self, i: int) -> np.ndarray:
        """Skew part QN - QN^T, whose face-face block vanishes."""
        Q = self.QN(i)
        return Q - Q.T

    def solve_mass(self, b: np.ndarray) -> np.ndarray:
        return cho_solve(self.M_chol, b)


def build_reference_operators(dim: int, N: int, vol_degree: int | None = None,
                              face_degree: int | None = None,
                              check: bool = True,
                              vol_rule: QuadratureRule | None = None) -> ReferenceOperators:
    """Assemble reference operators and the decoupled SBP blocks.

    Parameters
    ----------
    dim, N : int
        Dimension and polynomial degree.
    vol_degree, face_degree : int, optional
        Quadrature exactness degrees; both default to ``2N + 1``.
    vol_rule : QuadratureRule, optional
        Explicit volume rule overriding ``vol_degree``.
    check : bool
        Verify the operator identities and raise on failure.  Disable to
        build deliberately inconsistent operators for testing.
    """
    if N < 0:
        raise OperatorError("polynomial degree must be nonnegative")
    vol_degree = 2 * N + 1 if vol_degree is None else vol_degree
    if vol_rule is not None:
        vol_degree = vol_rule.exactness_degree
    face_degree = 2 * N + 1 if face_degree is None else face_degree
    if check and vol_degree < 2 * N - 1:
        raise OperatorError(
            f"volume rule of degree {vol_degree} violates the quadrature "
            f"assumption (must integrate degree 2N-1 = {2 * N - 1} exactly)")
    if check and face_degree < 2 * N:
        raise OperatorError(
            f"face rule of degree {face_degree} violates the quadrature "
            f"assumption (must integrate degree 2N = {2 * N} exactly)")
    elem = reference_element(dim)
    quad = simplex_quadrature(dim, vol_degree) if vol_rule is None else vol_rule
    fpts, wf, face_rule = face_quadrature(dim, face_degree)
    Vq, dVq = eval_basis(dim, N, quad.points)
    Vf, _ = eval_basis(dim, N, fpts)
    wq = quad.weights

    M = Vq.T @ (wq[:, None] * Vq)
    try:
        chol = cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise OperatorError("mass matrix is singular; volume rule too weak") from exc
    Pq = cho_solve(chol, Vq.T * wq)
    Lq = cho_solve(chol, Vf.T * wf)
    D = [Pq @ dV for dV in dVq]

    nfq = face_rule.num_points
    Jhat_f = np.repeat(elem.face_jacobians, nfq)
    nhatJ = np.repeat(elem.normals, nfq, axis=0).T * Jhat_f

    Dqq, Dqf, Dfq, Dff = [], [], [], []
    VfPq = Vf @ Pq
    VqLq = Vq @ Lq
    for i in range(dim):
        nJ = nhatJ[i]
        Dqq.append(Vq @ D[i] @ Pq - 0.5 * (VqLq * nJ) @ VfPq)
        Dqf.append(0.5 * VqLq * nJ)
        Dfq.append(-0.5 * nJ[:, None] * VfPq)
        Dff.append(0.5 * nJ)

    ops = ReferenceOperators(dim, N, elem, quad, face_rule, fpts, wq, wf, Vq, Vf,
                             M, chol, Pq, Lq, D, nhatJ, Jhat_f, Dqq, Dqf, Dfq, Dff)
    if check:
        report = verify_operators(ops)
        bad = {k: v for k, v in report.items() if v > BUILD_TOL}
        if bad:
            raise OperatorError(f"operator identities violated (quadrature too weak?): {bad}")
    return ops


def verify_operators(ops: ReferenceOperators, seed: int = 0) -> dict:
    """Max residual of each reference-operator identity."""
    rng = np.random.default_rng(seed)
    ones = np.ones(ops.Nq + ops.Nqf)
    VN = ops.VN
    coeffs = rng.standard_normal((ops.Np, 10))
    res = {
        "mass_symmetry": np.abs(ops.M - ops.M.T).max(),
        "projection": np.abs(ops.Pq @ ops.Vq - np.eye(ops.Np)).max(),
        "sbp": 0.0,
        "nullspace": 0.0,
        "polynomial_exactness": 0.0,
    }
    for i in range(ops.dim):
        Q = ops.QN(i)
        res["sbp"] = max(res["sbp"], np.abs(Q + Q.T - ops.BN(i)).max())
        DN = ops.DN(i)
        res["nullspace"] = max(res["nullspace"], np.abs(DN @ ones).max())
        lhs = DN @ VN @ coeffs
        rhs = np.vstack([ops.Vq @ ops.D[i] @ coeffs, np.zeros((ops.Nqf, 10))])
        scale = max(1.0, np.abs(rhs).max())
        res["polynomial_exactness"] = max(res["polynomial_exactness"],
                                          np.abs(lhs - rhs).max() / scale)
    return {k: float(v) for k, v in res.items()}


def dump_operators(ops: ReferenceOperators, outdir) -> list:
    """Write every reference matrix as a CSV file (17 significant digits)."""
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    mats = {"Vq": ops.Vq, "Vf": ops.Vf, "W": ops.wq[:, None], "Wf": ops.wf[:, None],
            "M": ops.M, "Pq": ops.Pq, "Lq": ops.Lq,
            "quad_points": ops.quad.points, "face_points": ops.face_points}
    for i in range(ops.dim):
        mats[f"D{i + 1}"] = ops.D[i]
        mats[f"DN{i + 1}"] = ops.DN(i)
        mats[f"QN{i + 1}"] = ops.QN(i)
        mats[f"BN{i + 1}"] = np.diag(ops.BN(i))[:, None]
    written = []
    for name, A in mats.items():
        path = out / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in np.atleast_2d(A):
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
        written.append(path)
    return written
