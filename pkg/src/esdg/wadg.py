"""Weighted and weight-adjusted mass matrices on curved elements.

Coefficient arrays use the layout ``(K, ..., Np)``: element first,
modal coefficient last, any number of field axes in between.  Values at
volume quadrature points use ``(K, ..., Nq)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ElementGeometry
from .operators import ReferenceOperators

MASS_MODES = ("weighted", "wadg")
FIXES = ("none", "polyJ", "mean_correct")
PROJECTION_MODES = ("wadg", "reference")


class MassError(ValueError):
    pass


@dataclass(frozen=True)
class ElementMassOps:
    """Per-element mass data.

    Attributes
    ----------
    mode : {"weighted", "wadg"}
    fix : {"none", "polyJ", "mean_correct"}
        Local conservation fix used with the weight-adjusted inverse.
    J : (K, Nq) Jacobian at volume quadrature points.
    Jw : (K, Nq) weight inside the weight-adjusted inverse; the degree-N
        projection of ``J`` under ``polyJ`` and ``J`` otherwise.
    Jf : (K, Nqf) surface Jacobian.
    chol : (K, Np, Np) lower Cholesky factors of the weighted mass
        matrices (weighted mode only).
    volume : (K,) element volumes, the quadrature integral of J.
    """

    mode: str
    fix: str
    ops: ReferenceOperators
    J: np.ndarray
    Jw: np.ndarray
    Jf: np.ndarray
    chol: np.ndarray | None
    volume: np.ndarray
    Minv: np.ndarray
    c1: np.ndarray

    @property
    def K(self) -> int:
        return self.J.shape[0]

    def storage(self) -> int:
        """Number of per-element reals held beyond the shared operators."""
        if self.mode == "weighted":
            return self.ops.Np * (self.ops.Np + 1) // 2
        return self.ops.Nq + self.ops.Nqf


def _fields(a, K):
    """Collapse middle axes: (K, ..., n) -> (K, F, n) plus original shape."""
    a = np.asarray(a, dtype=float)
    return a.reshape(K, -1, a.shape[-1]), a.shape


def build_element_mass_ops(ops: ReferenceOperators, geo: ElementGeometry,
                           mode: str = "wadg", fix: str = "polyJ") -> ElementMassOps:
    """Prepare weighted or weight-adjusted inverse mass data.

    Parameters
    ----------
    mode : {"weighted", "wadg"}
        ``weighted`` factorizes ``V_q^T W diag(J) V_q`` per element.
        ``wadg`` keeps only quadrature values of J and applies
        ``M^{-1} M_{1/J} M^{-1}`` matrix-free.
    fix : {"none", "polyJ", "mean_correct"}
        ``polyJ`` replaces J by its degree-N L2 projection inside the
        weight-adjusted inverse, which makes it exactly mean-preserving.
        ``mean_correct`` keeps J and shifts the solution mean afterwards.
    """
    if mode not in MASS_MODES:
        raise MassError(f"unknown mass mode '{mode}'; choose from {MASS_MODES}")
    if fix not in FIXES:
        raise MassError(f"unknown conservation fix '{fix}'; choose from {FIXES}")
    J = np.asarray(geo.Jq, dtype=float)
    if np.any(~(J > 0)):
        k = int(np.argmin(J.min(axis=1)))
        raise MassError(f"nonpositive Jacobian in element {k}")
    Jf = np.asarray(geo.Jf, dtype=float)
    Jw = J
    if mode == "wadg" and fix == "polyJ":
        Jw = (J @ ops.Pq.T) @ ops.Vq.T
        if np.any(~(Jw > 0)):
            k = int(np.argmin(Jw.min(axis=1)))
            raise MassError(f"projected Jacobian is not positive in element {k}; "
                            "refine the mesh or use fix='mean_correct'")
    chol = None
    if mode == "weighted":
        Mk = np.einsum("qi,kq,qj->kij", ops.Vq, J * ops.wq, ops.Vq)
        chol = np.linalg.cholesky(Mk)
    volume = J @ ops.wq
    Minv = np.linalg.inv(ops.M)
    Minv = 0.5 * (Minv + Minv.T)
    c1 = ops.Pq @ np.ones(ops.Nq)
    return ElementMassOps(mode, fix, ops, J, Jw, Jf, chol, volume, Minv, c1)


def _chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b for b of shape (K, F, Np)."""
    y = np.linalg.solve(L, np.swapaxes(b, 1, 2))
    x = np.linalg.solve(np.swapaxes(L, 1, 2), y)
    return np.swapaxes(x, 1, 2)


def apply_inverse_mass(emo: ElementMassOps, b) -> np.ndarray:
    """Apply the (approximate) inverse curved mass matrix.

    Weighted mode solves ``M^k x = b``.  The weight-adjusted mode
    computes ``P_q diag(1/J) V_q M^{-1} b``.
    """
    b3, shape = _fields(b, emo.K)
    if emo.mode == "weighted":
        x = _chol_solve(emo.chol, b3)
    else:
        ops = emo.ops
        y = (b3 @ emo.Minv.T) @ ops.Vq.T
        x = (y / emo.Jw[:, None, :]) @ ops.Pq.T
    return x.reshape(shape)


def apply_mass(emo: ElementMassOps, c) -> np.ndarray:
    """Apply the curved mass matrix (or its weight-adjusted approximation)."""
    ops = emo.ops
    c3, shape = _fields(c, emo.K)
    if emo.mode == "weighted":
        x = ((c3 @ ops.Vq.T) * (emo.J * ops.wq)[:, None, :]) @ ops.Vq
    else:
        # M M_{1/J}^{-1} M c, solving the weighted system per element
        Mc = c3 @ ops.M
        M1J = np.einsum("qi,kq,qj->kij", ops.Vq, ops.wq / emo.Jw, ops.Vq)
        y = np.swapaxes(np.linalg.solve(M1J, np.swapaxes(Mc, 1, 2)), 1, 2)
        x = y @ ops.M
    return x.reshape(shape)


def project(emo: ElementMassOps, values, mode: str = "wadg") -> np.ndarray:
    """Curved projection of values at volume quadrature points.

    ``mode="wadg"`` gives the weighted L2 projection in weighted mass
    mode and the weight-adjusted projection
    ``P_q diag(1/J) V_q P_q diag(J)`` otherwise.  ``mode="reference"``
    is the plain reference-element projection ``P_q``.
    """
    ops = emo.ops
    v3, shape = _fields(values, emo.K)
    if mode == "reference":
        out = v3 @ ops.Pq.T
    elif mode != "wadg":
        raise MassError(f"unknown projection mode '{mode}'; choose from {PROJECTION_MODES}")
    elif emo.mode == "weighted":
        b = (v3 * (emo.J * ops.wq)[:, None, :]) @ ops.Vq
        out = _chol_solve(emo.chol, b)
    else:
        y = ((v3 * emo.J[:, None, :]) @ ops.Pq.T) @ ops.Vq.T
        out = (y / emo.Jw[:, None, :]) @ ops.Pq.T
    return out.reshape(shape[:-1] + (ops.Np,))


def project_entropy_vars(emo: ElementMassOps, values, mode: str = "wadg"):
    """Project entropy variables and evaluate them at all quadrature points.

    Returns
    -------
    v_h : (K, ..., Np) coefficients.
    v_tilde : (K, ..., Nq + Nqf) values at volume then surface points.
    """
    v_h = project(emo, values, mode)
    ops = emo.ops
    v_tilde = np.concatenate([v_h @ ops.Vq.T, v_h @ ops.Vf.T], axis=-1)
    return v_h, v_tilde


def weighted_mean_correction(emo: ElementMassOps, target, u) -> np.ndarray:
    """Shift ``u`` by constants so that its J-weighted integral is ``target``.

    ``target`` has the shape of ``u`` without the last axis.
    """
    ops = emo.ops
    u3, shape = _fields(u, emo.K)
    t = np.asarray(target, dtype=float).reshape(emo.K, -1)
    if np.any(~(emo.volume > 0)):
        raise MassError("element volume must be positive")
    current = (u3 @ ops.Vq.T) @ (emo.J * ops.wq)[:, :, None]
    delta = (t - current[..., 0]) / emo.volume[:, None]
    return (u3 + delta[..., None] * emo.c1).reshape(shape)


def conservation_correction(emo: ElementMassOps, f_values, u_wadg) -> np.ndarray:
    """Restore the true mean of a weight-adjusted solve.

    Given quadrature values of ``f`` and ``u_wadg`` solving the
    weight-adjusted system, returns
    ``u_wadg + (int f - int J u_wadg) / int J``.
    """
    f3, _ = _fields(f_values, emo.K)
    target = f3 @ emo.ops.wq
    return weighted_mean_correction(emo, target, u_wadg)


def weighted_integral(emo: ElementMassOps, u) -> np.ndarray:
    """Per-element J-weighted integrals of coefficient arrays, (K, ...)."""
    ops = emo.ops
    u3, shape = _fields(u, emo.K)
    out = np.einsum("kfq,kq->kf", u3 @ ops.Vq.T, emo.J * ops.wq)
    return out.reshape(shape[:-1])


# ---------------------------------------------------------------------------
# projection study

def _smooth(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.exp(x1 + x2) * np.sin(np.pi * x1) * np.sin(np.pi * x2)


def _discontinuous(x):
    x1, x2 = x[..., 0], x[..., 1]
    return _smooth(x) + np.heaviside(x1 + x2 - np.sin(np.pi * x1), 1.0)


TEST_FUNCTIONS = {
    "smooth": _smooth,
    "discontinuous": _discontinuous,
    "constant": lambda x: np.full(x.shape[:-1], 1.5),
}


def projection_difference_study(N: int = 4, cells=(2, 4, 8, 16, 32),
                                test_function="smooth", warp: str = "cos2d") -> list:
    """L2 and weight-adjusted projection errors on a warped 2D mesh family.

    Projections use a degree-2N volume rule.  Errors are measured with a
    separate degree-(2N+1) rule on the curved elements.

    Returns
    -------
    list of dict with keys h, err_l2proj, err_wadg, err_diff.
    """
    from .geometry import (curve_nodes, generate_box_mesh, geometric_factors,
                           mesh_size, place_nodes)
    from .operators import build_reference_operators

    fun = TEST_FUNCTIONS[test_function] if isinstance(test_function, str) else test_function
    ops = build_reference_operators(2, N, vol_degree=2 * N)
    ops_err = build_reference_operators(2, N, vol_degree=2 * N + 1)
    rows = []
    for n in cells:
        mesh = generate_box_mesh(2, [(-1.0, 1.0), (-1.0, 1.0)], [n, n], periodic=False)
        mesh = curve_nodes(place_nodes(mesh, N), warp)
        geo = geometric_factors(mesh, ops)
        geo_err = geometric_factors(mesh, ops_err)
        vals = fun(geo.xq)
        c_l2 = project(build_element_mass_ops(ops, geo, "weighted", "none"), vals)
        c_wa = project(build_element_mass_ops(ops, geo, "wadg", "none"), vals)
        w = ops_err.wq * geo_err.Jq
        u = fun(geo_err.xq)

        def norm(e):
            return float(np.sqrt(np.sum(w * e * e)))

        rows.append({
            "h": mesh_size(geo),
            "err_l2proj": norm(u - c_l2 @ ops_err.Vq.T),
            "err_wadg": norm(u - c_wa @ ops_err.Vq.T),
            "err_diff": norm((c_l2 - c_wa) @ ops_err.Vq.T),
        })
    return rows
