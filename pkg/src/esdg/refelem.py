"""Reference simplices, orthonormal modal bases, nodes and quadrature.

The reference triangle has vertices (-1,-1), (1,-1), (-1,1) and the
reference tetrahedron has vertices (-1,-1,-1), (1,-1,-1), (-1,1,-1),
(-1,-1,1).  The modal basis is the orthonormal Koornwinder-Dubiner basis
built from Jacobi polynomials in collapsed coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import eval_jacobi, gammaln, roots_jacobi

_INSIDE_TOL = 1e-10
MAX_NODE_DEGREE = 9


@dataclass(frozen=True)
class ReferenceElement:
    dim: int
    vertices: np.ndarray
    faces: tuple
    normals: np.ndarray
    face_jacobians: np.ndarray

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def measure(self) -> float:
        return 2.0 if self.dim == 2 else 4.0 / 3.0


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def num_points(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class NodeSet:
    degree: int
    nodes: np.ndarray
    face_node_ids: list = field(default_factory=list)


@lru_cache(maxsize=None)
def reference_element(dim: int) -> ReferenceElement:
    if dim == 2:
        verts = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
        faces = ((0, 1), (1, 2), (2, 0))
        normals = np.array([[0.0, -1.0], [1.0, 1.0], [-1.0, 0.0]])
    elif dim == 3:
        verts = np.array([[-1.0, -1.0, -1.0], [1.0, -1.0, -1.0],
                          [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
        faces = ((0, 1, 2), (0, 1, 3), (1, 2, 3), (0, 2, 3))
        normals = np.array([[0.0, 0.0, -1.0], [0.0, -1.0, 0.0],
                            [1.0, 1.0, 1.0], [-1.0, 0.0, 0.0]])
    else:
        raise ValueError(f"unsupported dimension {dim}; expected 2 or 3")
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    # reference faces are [-1,1] (2D) or the reference triangle (3D)
    ref_face_measure = 2.0
    jac = np.array([_simplex_measure(verts[list(f)]) / ref_face_measure
                    for f in faces])
    verts.flags.writeable = False
    normals.flags.writeable = False
    jac.flags.writeable = False
    return ReferenceElement(dim, verts, faces, normals, jac)


def _simplex_measure(pts: np.ndarray) -> float:
    edges = pts[1:] - pts[0]
    if len(edges) == 1:
        return float(np.linalg.norm(edges[0]))
    # area of a triangle embedded in 2D or 3D
    if pts.shape[1] == 2:
        return 0.5 * abs(np.linalg.det(edges))
    return 0.5 * float(np.linalg.norm(np.cross(edges[0], edges[1])))


# ---------------------------------------------------------------------------
# Jacobi polynomials

def jacobi_normalized(x, alpha: float, beta: float, n: int) -> np.ndarray:
    """Jacobi polynomial P_n^(alpha,beta) normalized to unit L2 norm."""
    x = np.asarray(x, dtype=float)
    lognorm = ((alpha + beta + 1) * np.log(2.0) - np.log(2 * n + alpha + beta + 1)
               + gammaln(n + alpha + 1) + gammaln(n + beta + 1)
               - gammaln(n + alpha + beta + 1) - gammaln(n + 1))
    return eval_jacobi(n, alpha, beta, x) * np.exp(-0.5 * lognorm)


def grad_jacobi_normalized(x, alpha: float, beta: float, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return np.sqrt(n * (n + alpha + beta + 1)) * jacobi_normalized(
        x, alpha + 1, beta + 1, n - 1)


def gauss_lobatto_1d(n: int) -> np.ndarray:
    """n+1 Gauss-Lobatto-Legendre points on [-1, 1], ascending."""
    if n == 0:
        return np.array([0.0])
    if n == 1:
        return np.array([-1.0, 1.0])
    inner, _ = roots_jacobi(n - 1, 1.0, 1.0)
    return np.concatenate(([-1.0], np.sort(inner), [1.0]))


# ---------------------------------------------------------------------------
# modal basis

def num_modes(dim: int, N: int) -> int:
    return comb(N + dim, dim)


def num_face_modes(dim: int, N: int) -> int:
    return comb(N + dim - 1, dim - 1)


def mode_indices(dim: int, N: int) -> list:
    if dim == 2:
        return [(i, j) for i in range(N + 1) for j in range(N + 1 - i)]
    return [(i, j, k) for i in range(N + 1) for j in range(N + 1 - i)
            for k in range(N + 1 - i - j)]


def _check_inside(dim: int, pts: np.ndarray) -> None:
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"points must have shape (n, {dim})")
    # barycentric coordinates of the bi-unit simplex
    lam = np.column_stack([(1.0 + pts) / 2.0, -(pts.sum(axis=1) + dim - 2) / 2.0])
    bad = np.where(np.any(lam < -_INSIDE_TOL, axis=1))[0]
    if len(bad):
        raise ValueError(f"point {pts[bad[0]]} lies outside the reference simplex")


def _collapse_2d(r, s):
    denom = 1.0 - s
    safe = np.abs(denom) > 1e-14
    a = np.where(safe, 2.0 * (1.0 + r) / np.where(safe, denom, 1.0) - 1.0, -1.0)
    return a, s


def _collapse_3d(r, s, t):
    d1 = -(s + t)
    safe1 = np.abs(d1) > 1e-14
    a = np.where(safe1, 2.0 * (1.0 + r) / np.where(safe1, d1, 1.0) - 1.0, -1.0)
    d2 = 1.0 - t
    safe2 = np.abs(d2) > 1e-14
    b = np.where(safe2, 2.0 * (1.0 + s) / np.where(safe2, d2, 1.0) - 1.0, -1.0)
    return a, b, t


def _modes_2d(N, r, s):
    a, b = _collapse_2d(r, s)
    V, Vr, Vs = [], [], []
    for i, j in mode_indices(2, N):
        fa = jacobi_normalized(a, 0, 0, i)
        dfa = grad_jacobi_normalized(a, 0, 0, i)
        gb = jacobi_normalized(b, 2 * i + 1, 0, j)
        dgb = grad_jacobi_normalized(b, 2 * i + 1, 0, j)
        hb = 0.5 * (1.0 - b)
        V.append(np.sqrt(2.0) * fa * gb * (1.0 - b) ** i)
        dr = dfa * gb
        if i > 0:
            dr = dr * hb ** (i - 1)
        ds = dfa * gb * 0.5 * (1.0 + a)
        if i > 0:
            ds = ds * hb ** (i - 1)
        tmp = dgb * hb ** i
        if i > 0:
            tmp = tmp - 0.5 * i * gb * hb ** (i - 1)
        ds = ds + fa * tmp
        scale = 2.0 ** (i + 0.5)
        Vr.append(scale * dr)
        Vs.append(scale * ds)
    return np.array(V).T, [np.array(Vr).T, np.array(Vs).T]


def _modes_3d(N, r, s, t):
    a, b, c = _collapse_3d(r, s, t)
    V, Vr, Vs, Vt = [], [], [], []
    hb = 0.5 * (1.0 - b)
    hc = 0.5 * (1.0 - c)
    for i, j, k in mode_indices(3, N):
        fa = jacobi_normalized(a, 0, 0, i)
        dfa = grad_jacobi_normalized(a, 0, 0, i)
        gb = jacobi_normalized(b, 2 * i + 1, 0, j)
        dgb = grad_jacobi_normalized(b, 2 * i + 1, 0, j)
        hk = jacobi_normalized(c, 2 * (i + j) + 2, 0, k)
        dhk = grad_jacobi_normalized(c, 2 * (i + j) + 2, 0, k)
        V.append(2.0 * np.sqrt(2.0) * fa * gb * (1.0 - b) ** i * hk
                 * (1.0 - c) ** (i + j))
        dr = dfa * gb * hk
        if i > 0:
            dr = dr * hb ** (i - 1)
        if i + j > 0:
            dr = dr * hc ** (i + j - 1)
        ds = 0.5 * (1.0 + a) * dr
        tmp = dgb * hb ** i
        if i > 0:
            tmp = tmp - 0.5 * i * gb * hb ** (i - 1)
        if i + j > 0:
            tmp = tmp * hc ** (i + j - 1)
        tmp = fa * tmp * hk
        ds = ds + tmp
        dt = 0.5 * (1.0 + a) * dr + 0.5 * (1.0 + b) * tmp
        tmp = dhk * hc ** (i + j)
        if i + j > 0:
            tmp = tmp - 0.5 * (i + j) * hk * hc ** (i + j - 1)
        tmp = fa * gb * tmp * hb ** i
        dt = dt + tmp
        scale = 2.0 ** (2 * i + j + 1.5)
        Vr.append(scale * dr)
        Vs.append(scale * ds)
        Vt.append(scale * dt)
    return np.array(V).T, [np.array(Vr).T, np.array(Vs).T, np.array(Vt).T]


def eval_basis(dim: int, N: int, points) -> tuple:
    """Evaluate the orthonormal basis and its reference gradient.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    N : int
        Polynomial degree.
    points : array_like, shape (npts, dim)
        Points in the closed reference simplex.

    Returns
    -------
    V : ndarray, shape (npts, Np)
        ``V[i, j] = phi_j(x_i)``.
    dV : list of ndarray
        ``dV[m][i, j] = d phi_j / d xhat_m (x_i)``.
    """
    if N < 0:
        raise ValueError("polynomial degree must be nonnegative")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _check_inside(dim, pts)
    if dim == 2:
        return _modes_2d(N, pts[:, 0], pts[:, 1])
    if dim == 3:
        return _modes_3d(N, pts[:, 0], pts[:, 1], pts[:, 2])
    raise ValueError(f"unsupported dimension {dim}")


# ---------------------------------------------------------------------------
# quadrature

@lru_cache(maxsize=None)
def _simplex_quadrature(dim: int, target_degree: int) -> QuadratureRule:
    n = max(1, (target_degree + 2) // 2)  # Gauss exact for 2n-1
    xa, wa = roots_jacobi(n, 0.0, 0.0)
    xb, wb = roots_jacobi(n, 1.0, 0.0)
    if dim == 2:
        A, B = np.meshgrid(xa, xb, indexing="ij")
        WA, WB = np.meshgrid(wa, wb, indexing="ij")
        r = 0.5 * (1.0 + A) * (1.0 - B) - 1.0
        pts = np.column_stack([r.ravel(), B.ravel()])
        w = 0.5 * (WA * WB).ravel()
    elif dim == 3:
        xc, wc = roots_jacobi(n, 2.0, 0.0)
        A, B, C = np.meshgrid(xa, xb, xc, indexing="ij")
        WA, WB, WC = np.meshgrid(wa, wb, wc, indexing="ij")
        r = 0.25 * (1.0 + A) * (1.0 - B) * (1.0 - C) - 1.0
        s = 0.5 * (1.0 + B) * (1.0 - C) - 1.0
        pts = np.column_stack([r.ravel(), s.ravel(), C.ravel()])
        w = 0.125 * (WA * WB * WC).ravel()
    else:
        raise ValueError(f"unsupported dimension {dim}")
    pts.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(pts, w, 2 * n - 1)


def simplex_quadrature(dim: int, target_degree: int) -> QuadratureRule:
    """Collapsed-coordinate Gauss-Jacobi rule on the reference simplex.

    The rule integrates every polynomial of total degree
    ``target_degree`` exactly and has strictly positive weights.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}; expected 2 or 3")
    if target_degree < 0:
        raise ValueError("target degree must be nonnegative")
    return _simplex_quadrature(dim, int(target_degree))


@lru_cache(maxsize=None)
def _gauss_1d(n: int):
    x, w = roots_jacobi(n, 0.0, 0.0)
    return x, w


def face_quadrature(dim: int, target_degree: int) -> tuple:
    """Quadrature on every face of the reference element.

    Returns
    -------
    points : ndarray, shape (nfaces * nfq, dim)
        Face points in volume reference coordinates, ordered face by face.
    weights : ndarray, shape (nfaces * nfq,)
        Weights of the reference face rule (not scaled by the face Jacobian).
    face_rule : QuadratureRule
        The rule on the reference face, reused for face-to-face matching.
    """
    elem = reference_element(dim)
    if dim == 2:
        n = max(1, (target_degree + 2) // 2)
        x, w = _gauss_1d(n)
        face_rule = QuadratureRule(x[:, None], w, 2 * n - 1)
        lam = np.column_stack([(1.0 - x) / 2.0, (1.0 + x) / 2.0])
    else:
        face_rule = simplex_quadrature(2, target_degree)
        fr = face_rule.points
        lam = np.column_stack([-(fr[:, 0] + fr[:, 1]) / 2.0,
                               (1.0 + fr[:, 0]) / 2.0, (1.0 + fr[:, 1]) / 2.0])
        w = face_rule.weights
    pts = np.concatenate([lam @ elem.vertices[list(f)] for f in elem.faces])
    wts = np.tile(w, elem.num_faces)
    return pts, wts, face_rule


# ---------------------------------------------------------------------------
# interpolation nodes

def _recursive_bary(d: int, n: int, alpha: tuple, gll: dict) -> np.ndarray:
    """Barycentric coordinates of one recursively defined node.

    Each node is a weighted average of the nodes of its facets, where
    the weights come from the 1D Lobatto points.  The construction
    reproduces Lobatto points on edges and is symmetric under vertex
    permutations, so face node sets match between neighbours.
    """
    if d == 0:
        return np.ones(1)
    if n == 0:
        return np.full(d + 1, 1.0 / (d + 1))
    x = gll.setdefault(n, (gauss_lobatto_1d(n) + 1.0) / 2.0)
    total = np.zeros(d + 1)
    wsum = 0.0
    for i in range(d + 1):
        w = x[n - alpha[i]]
        if w == 0.0:
            continue
        sub = alpha[:i] + alpha[i + 1:]
        b = _recursive_bary(d - 1, n - alpha[i], sub, gll)
        total += w * np.insert(b, i, 0.0)
        wsum += w
    return total / wsum


@lru_cache(maxsize=None)
def interpolation_nodes(dim: int, N: int) -> NodeSet:
    """Interpolation nodes of degree ``N`` on the reference simplex.

    Nodes with one vanishing barycentric coordinate lie exactly on the
    opposite face, giving ``num_face_modes(dim, N)`` nodes per face.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if not 1 <= N <= MAX_NODE_DEGREE:
        raise ValueError(f"node degree {N} outside supported range 1..{MAX_NODE_DEGREE}")
    elem = reference_element(dim)
    gll: dict = {}
    multi = list(_multi_indices(dim, N))
    bary = np.array([_recursive_bary(dim, N, a, gll) for a in multi])
    nodes = bary @ elem.vertices
    multi = np.array(multi)
    face_ids = []
    for f in elem.faces:
        opposite = [v for v in range(dim + 1) if v not in f][0]
        face_ids.append(np.where(multi[:, opposite] == 0)[0])
    nodes.flags.writeable = False
    return NodeSet(N, nodes, face_ids)


def _multi_indices(dim: int, N: int):
    """Barycentric multi-indices alpha with |alpha| = N, one per node."""
    if dim == 2:
        for j in range(N + 1):
            for i in range(N + 1 - j):
                yield (N - i - j, i, j)
    else:
        for k in range(N + 1):
            for j in range(N + 1 - k):
                for i in range(N + 1 - j - k):
                    yield (N - i - j - k, i, j, k)


def nodal_vandermonde(dim: int, N: int) -> np.ndarray:
    return eval_basis(dim, N, interpolation_nodes(dim, N).nodes)[0]


def interp_matrix(dim: int, N: int, points) -> np.ndarray:
    """Matrix mapping nodal values at degree-N nodes to values at points."""
    V = nodal_vandermonde(dim, N)
    Vp, _ = eval_basis(dim, N, points)
    return np.linalg.solve(V.T, Vp.T).T


def nodal_diff_matrices(dim: int, N: int, points=None) -> list:
    """Derivatives at ``points`` (default: the nodes) of the nodal interpolant."""
    V = nodal_vandermonde(dim, N)
    pts = interpolation_nodes(dim, N).nodes if points is None else points
    _, dV = eval_basis(dim, N, pts)
    return [np.linalg.solve(V.T, D.T).T for D in dV]
