"""Meshes, curvilinear node placement, connectivity and metric terms.

Metric terms are stored as ``G[k, i, j, :] = J dxhat_j/dx_i`` at the
volume and surface quadrature points of element ``k`` (volume first).
Scaled normals ``nJf`` are built from the surface traces of ``G``, so
neighbouring elements see equal and opposite normals whenever the
traces of ``G`` agree.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .operators import ReferenceOperators
from .refelem import (interp_matrix, interpolation_nodes, nodal_diff_matrices,
                      reference_element)

GCL_ERROR_TOL = 1e-8


class MeshError(ValueError):
    pass


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Conforming simplicial mesh.

    Attributes
    ----------
    VX : ndarray, shape (Nv, dim)
        Vertex coordinates.
    EToV : ndarray, shape (K, dim+1)
        Element vertices sorted by global index; ``orientation`` records
        the sign of each affine map.
    EToE, EToF : ndarray, shape (K, nfaces)
        Neighbour element and neighbour face; boundary faces point to
        themselves.
    period : ndarray, shape (dim,)
        Period length per axis, 0 where the axis is not periodic.
    x : ndarray, shape (K, Np, dim) or None
        High-order node coordinates.
    """

    dim: int
    VX: np.ndarray
    EToV: np.ndarray
    EToE: np.ndarray
    EToF: np.ndarray
    period: np.ndarray
    origin: np.ndarray
    N: int | None = None
    x: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.EToV.shape[0]

    @property
    def num_faces(self) -> int:
        return self.dim + 1

    @property
    def orientation(self) -> np.ndarray:
        A = self.VX[self.EToV[:, 1:]] - self.VX[self.EToV[:, :1]]
        return np.sign(np.linalg.det(A))

    @property
    def boundary_faces(self) -> np.ndarray:
        k = np.arange(self.K)[:, None]
        f = np.arange(self.num_faces)[None, :]
        return np.argwhere((self.EToE == k) & (self.EToF == f))

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_faces) == 0

    def wrap(self, pts: np.ndarray, tol: float) -> np.ndarray:
        """Map points into the fundamental periodic cell."""
        out = np.array(pts, dtype=float, copy=True)
        for a in range(self.dim):
            L = self.period[a]
            if L > 0:
                w = np.mod(out[..., a] - self.origin[a], L)
                w = np.where(w > L - tol, w - L, w)
                out[..., a] = w + self.origin[a]
        return out

    def periodic_delta(self, d: np.ndarray) -> np.ndarray:
        """Shortest periodic image of a difference vector."""
        out = np.array(d, dtype=float, copy=True)
        for a in range(self.dim):
            L = self.period[a]
            if L > 0:
                out[..., a] -= L * np.round(out[..., a] / L)
        return out


# ---------------------------------------------------------------------------
# construction

def _sort_vertices(VX: np.ndarray, EToV: np.ndarray) -> np.ndarray:
    # Sorting by global id makes neighbours traverse shared faces in the
    # same order, so one (non-symmetric) face rule serves both sides.
    EToV = np.sort(np.asarray(EToV, dtype=np.int64), axis=1)
    A = VX[EToV[:, 1:]] - VX[EToV[:, :1]]
    det = np.linalg.det(A)
    if np.any(np.abs(det) < 1e-14 * np.max(np.abs(A)) ** VX.shape[1]):
        raise MeshError("degenerate element with zero volume")
    return EToV


def _face_vertices(dim: int) -> list:
    return [list(f) for f in reference_element(dim).faces]


def build_mesh(VX, EToV, period=None, origin=None) -> Mesh:
    """Create a mesh and its face connectivity from raw arrays."""
    VX = np.asarray(VX, dtype=float)
    dim = VX.shape[1]
    EToV = _sort_vertices(VX, EToV)
    period = np.zeros(dim) if period is None else np.asarray(period, dtype=float)
    origin = VX.min(axis=0) if origin is None else np.asarray(origin, dtype=float)
    mesh = Mesh(dim, VX, EToV, np.zeros((len(EToV), dim + 1), np.int64),
                np.zeros((len(EToV), dim + 1), np.int64), period, origin)
    EToE, EToF = _connect(mesh)
    return replace(mesh, EToE=EToE, EToF=EToF)


def _connect(mesh: Mesh):
    dim, K = mesh.dim, mesh.K
    fv = _face_vertices(dim)
    nf = dim + 1
    coords = mesh.VX[mesh.EToV]  # (K, dim+1, dim)
    fcoords = np.stack([coords[:, f, :] for f in fv], axis=1)  # (K, nf, dim, dim)
    cent = fcoords.mean(axis=2).reshape(-1, dim)
    edge = np.linalg.norm(coords[:, 1] - coords[:, 0], axis=1).min()
    tol = 1e-8 * edge
    wc = mesh.wrap(cent, tol)
    tree = cKDTree(wc)
    EToE = np.repeat(np.arange(K)[:, None], nf, axis=1)
    EToF = np.repeat(np.arange(nf)[None, :], K, axis=0)
    pairs = tree.query_pairs(r=max(tol, 1e-13), output_type="ndarray")
    seen = np.zeros(K * nf, dtype=int)
    for a, b in pairs:
        seen[a] += 1
        seen[b] += 1
    if np.any(seen > 1):
        raise MeshError("non-watertight mesh: more than two faces coincide")
    for a, b in pairs:
        ka, fa = divmod(int(a), nf)
        kb, fb = divmod(int(b), nf)
        if ka == kb:
            raise MeshError(f"element {ka} is its own neighbour")
        va = fcoords[ka, fa]
        vb = fcoords[kb, fb]
        shift = mesh.periodic_delta(cent[a] - cent[b]) - (cent[a] - cent[b])
        vb = vb - shift
        d = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
        if d.min(axis=1).max() > tol:
            raise MeshError(f"faces {ka}:{fa} and {kb}:{fb} share a centroid "
                            "but not their vertices")
        EToE[ka, fa], EToF[ka, fa] = kb, fb
        EToE[kb, fb], EToF[kb, fb] = ka, fa
    return EToE, EToF


def generate_box_mesh(dim: int, extents, cells, periodic=True) -> Mesh:
    """Structured simplicial mesh of a box.

    Parameters
    ----------
    dim : int
        2 or 3.
    extents : sequence of (lo, hi) pairs
    cells : sequence of int
        Cells per axis; each cell becomes 2 triangles or 6 tetrahedra.
    periodic : bool or sequence of bool
    """
    if dim not in (2, 3):
        raise MeshError(f"unsupported dimension {dim}")
    extents = np.asarray(extents, dtype=float).reshape(dim, 2)
    cells = [int(c) for c in np.broadcast_to(cells, (dim,))]
    if min(cells) < 1:
        raise MeshError("need at least one cell per axis")
    periodic = np.broadcast_to(np.asarray(periodic, dtype=bool), (dim,))
    axes = [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(extents, cells)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    shape = [n + 1 for n in cells]

    def vid(idx):
        return np.ravel_multi_index(idx, shape)

    elems = []
    if dim == 2:
        for i in range(cells[0]):
            for j in range(cells[1]):
                v00, v10 = vid((i, j)), vid((i + 1, j))
                v01, v11 = vid((i, j + 1)), vid((i + 1, j + 1))
                elems += [(v00, v10, v11), (v00, v11, v01)]
    else:
        for i in range(cells[0]):
            for j in range(cells[1]):
                for k in range(cells[2]):
                    for perm in itertools.permutations(range(3)):
                        corner = np.array([i, j, k])
                        tet = [vid(tuple(corner))]
                        for ax in perm:
                            corner = corner.copy()
                            corner[ax] += 1
                            tet.append(vid(tuple(corner)))
                        elems.append(tuple(tet))
    period = np.where(periodic, extents[:, 1] - extents[:, 0], 0.0)
    return build_mesh(grid, np.array(elems), period=period, origin=extents[:, 0])


def generate_quasi_uniform_mesh(extents, h: float, periodic=True) -> Mesh:
    """Near-equilateral triangle mesh of a rectangle with edge length about h.

    Rows of height ``h sqrt(3)/2`` alternate between a regular row of
    vertices and a row shifted by half an edge; the shifted rows keep
    their end vertices on the boundary so the mesh stays inside the
    box.  The row count is rounded up to an even number so that the
    pattern is periodic in x2.
    """
    (x0, x1), (y0, y1) = np.asarray(extents, dtype=float).reshape(2, 2)
    if not h > 0:
        raise MeshError("mesh size must be positive")
    nx = max(1, int(round((x1 - x0) / h)))
    ny = max(2, int(round((y1 - y0) / (h * np.sqrt(3) / 2))))
    ny += ny % 2
    dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
    VX, rows = [], []
    for j in range(ny + 1):
        if j % 2 == 0:
            xs = x0 + dx * np.arange(nx + 1)
        else:
            xs = np.concatenate([[x0], x0 + dx * (np.arange(nx) + 0.5), [x1]])
        rows.append(np.arange(len(VX), len(VX) + len(xs)))
        VX += [(x, y0 + j * dy) for x in xs]
    elems = []
    for j in range(ny):
        lo, hi = rows[j], rows[j + 1]
        if j % 2 == 0:
            elems.append((lo[0], hi[1], hi[0]))
            for i in range(nx):
                elems += [(lo[i], lo[i + 1], hi[i + 1]), (lo[i + 1], hi[i + 2], hi[i + 1])]
        else:
            elems.append((lo[0], lo[1], hi[0]))
            for i in range(nx):
                elems += [(lo[i + 1], hi[i + 1], hi[i]), (lo[i + 1], lo[i + 2], hi[i + 1])]
    periodic = np.broadcast_to(np.asarray(periodic, dtype=bool), (2,))
    period = np.where(periodic, [x1 - x0, y1 - y0], 0.0)
    return build_mesh(np.array(VX), np.array(elems), period=period, origin=[x0, y0])


def load_mesh(path, period=None) -> Mesh:
    """Read a Gmsh MSH 2.2 ASCII file with triangles or tetrahedra."""
    text = Path(path).read_text().split("\n")
    it = iter(line.strip() for line in text)
    nodes = {}
    elements = {2: [], 4: []}
    unsupported = set()
    version_ok = False
    for line in it:
        if line == "$MeshFormat":
            parts = next(it).split()
            if not parts or not parts[0].startswith("2.") or parts[1] != "0":
                raise MeshError(f"unsupported MSH format '{' '.join(parts)}'; "
                                "need version 2.x ASCII")
            version_ok = True
        elif line == "$Nodes":
            n = int(next(it))
            for _ in range(n):
                parts = next(it).split()
                nodes[int(parts[0])] = [float(v) for v in parts[1:4]]
        elif line == "$Elements":
            n = int(next(it))
            for _ in range(n):
                parts = [int(v) for v in next(it).split()]
                etype, ntags = parts[1], parts[2]
                conn = parts[3 + ntags:]
                if etype in elements:
                    elements[etype].append(conn)
                elif etype not in (1, 15):
                    unsupported.add(etype)
    if not version_ok:
        raise MeshError("missing $MeshFormat section")
    if unsupported:
        raise MeshError(f"mixed or unsupported element types {sorted(unsupported)}")
    dim = 3 if elements[4] else 2
    conn = np.array(elements[4] if dim == 3 else elements[2], dtype=np.int64)
    if len(conn) == 0:
        raise MeshError("no triangle or tetrahedron elements found")
    tags = sorted(nodes)
    index = {t: i for i, t in enumerate(tags)}
    VX = np.array([nodes[t] for t in tags])[:, :dim]
    if dim == 2 and np.any(np.abs(np.array([nodes[t][2] for t in tags])) > 1e-12):
        raise MeshError("2D mesh must lie in the z = 0 plane")
    EToV = np.vectorize(index.__getitem__)(conn)
    # drop unreferenced nodes
    used = np.unique(EToV)
    remap = -np.ones(len(VX), np.int64)
    remap[used] = np.arange(len(used))
    return build_mesh(VX[used], remap[EToV], period=period)


def write_msh(path, mesh: Mesh) -> None:
    """Write vertices and elements as Gmsh MSH 2.2 ASCII."""
    etype = 2 if mesh.dim == 2 else 4
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(mesh.VX))]
    for i, v in enumerate(mesh.VX):
        xyz = list(v) + [0.0] * (3 - mesh.dim)
        lines.append(f"{i + 1} " + " ".join(f"{c:.17g}" for c in xyz))
    lines += ["$EndNodes", "$Elements", str(mesh.K)]
    for k, ev in enumerate(mesh.EToV):
        lines.append(f"{k + 1} {etype} 2 1 1 " + " ".join(str(v + 1) for v in ev))
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# high-order nodes and warps

def _bary(dim: int, pts: np.ndarray) -> np.ndarray:
    return np.column_stack([-(pts.sum(axis=1) + dim - 2) / 2.0, (1.0 + pts) / 2.0])


def affine_map(mesh: Mesh, ref_pts: np.ndarray) -> np.ndarray:
    """Affine images of reference points in every element, (K, npts, dim)."""
    lam = _bary(mesh.dim, np.asarray(ref_pts, dtype=float))
    return np.einsum("pv,kvd->kpd", lam, mesh.VX[mesh.EToV])


def place_nodes(mesh: Mesh, N: int) -> Mesh:
    """Attach degree-N interpolation nodes placed by the affine map."""
    nodes = interpolation_nodes(mesh.dim, N).nodes
    return replace(mesh, N=N, x=affine_map(mesh, nodes))


def _warp_vortex2d(x):
    x1, x2 = x[..., 0], x[..., 1]
    y1 = x1 + np.sin(np.pi * x1 / 20) * np.sin(2 * np.pi * (x2 + 5) / 10)
    y2 = x2 - 0.5 * np.sin(2 * np.pi * x1 / 20) * np.sin(np.pi * (x2 + 5) / 10)
    return np.stack([y1, y2], axis=-1)


def _warp_cos2d(x):
    x1, x2 = x[..., 0], x[..., 1]
    d = 0.125 * np.cos(np.pi * x1 / 2) * np.cos(np.pi * x2 / 2)
    return np.stack([x1 + d, x2 + d], axis=-1)


def _warp_cos3d(x):
    d = 0.125 * np.cos(np.pi * x[..., 0] / 2) * np.cos(np.pi * x[..., 1] / 2) \
        * np.cos(np.pi * x[..., 2] / 2)
    return x + d[..., None]


def _warp_vortex3d(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    s = np.sin
    pi = np.pi
    y1 = x1 + 0.5 * s(pi * x1 / 10) * s(2 * pi * x2 / 20) * s(pi * x3 / 10)
    y2 = x2 - s(2 * pi * x1 / 10) * s(pi * x2 / 10) * s(2 * pi * x3 / 10)
    y3 = x3 + 0.5 * s(pi * x1 / 10) * s(2 * pi * x2 / 10) * s(pi * x3 / 10)
    return np.stack([y1, y2, y3], axis=-1)


def _warp_taylorgreen(x):
    d = 0.125 * np.sin(x[..., 0]) * np.sin(x[..., 1]) * np.sin(x[..., 2])
    return x + d[..., None]


WARPS: dict[str, Callable] = {
    "identity": lambda x: np.array(x, copy=True),
    "vortex2d": _warp_vortex2d,
    "pulse2d": _warp_vortex2d,
    "cos2d": _warp_cos2d,
    "cos3d": _warp_cos3d,
    "vortex3d": _warp_vortex3d,
    "taylorgreen3d": _warp_taylorgreen,
}


def get_warp(warp) -> Callable:
    if callable(warp):
        return warp
    try:
        return WARPS[warp]
    except KeyError:
        raise MeshError(f"unknown warp '{warp}'; choose from {sorted(WARPS)}") from None


def warp_jacobian(warp, x: np.ndarray) -> np.ndarray:
    """Jacobian d(warp)/dx by complex-step differentiation, (..., dim, dim)."""
    f = get_warp(warp)
    dim = x.shape[-1]
    h = 1e-30
    cols = []
    for a in range(dim):
        xc = x.astype(complex)
        xc[..., a] += 1j * h
        cols.append(np.imag(f(xc)) / h)
    return np.stack(cols, axis=-1)


def curve_nodes(mesh: Mesh, warp) -> Mesh:
    """Move high-order nodes by a warp function of physical position."""
    if mesh.x is None:
        raise MeshError("place nodes before warping")
    f = get_warp(warp)
    x = np.real(f(mesh.x))
    Dn = nodal_diff_matrices(mesh.dim, mesh.N)
    A = np.stack([np.einsum("pq,kqd->kpd", D, x) for D in Dn], axis=-1)
    J = np.linalg.det(A) * mesh.orientation[:, None]
    bad = np.where(~(J > 0).all(axis=1))[0]
    if len(bad):
        raise GeometryError(f"warp folds element {bad[0]} (J <= 0 at a node)")
    return replace(mesh, x=x)


# ---------------------------------------------------------------------------
# geometric factors

@dataclass(frozen=True)
class ElementGeometry:
    """Geometric data at volume + surface quadrature points.

    Attributes
    ----------
    J : (K, Nq + Nqf) mapping Jacobian determinant.
    G : (K, dim, dim, Nq + Nqf) scaled metric terms.
    nJf : (K, dim, Nqf) scaled outward normals n_i J_f.
    Jf : (K, Nqf) surface Jacobian.
    h : (K,) size estimate max J / J_f over face points.
    xq, xf : physical volume and surface quadrature points.
    mapP : (K, Nqf) flat index of the matching exterior face point.
    """

    mode: str
    J: np.ndarray
    G: np.ndarray
    nJf: np.ndarray
    Jf: np.ndarray
    h: np.ndarray
    xq: np.ndarray
    xf: np.ndarray
    mapP: np.ndarray

    @property
    def Jq(self) -> np.ndarray:
        return self.J[:, :self.xq.shape[1]]


@dataclass(frozen=True)
class InterpOperators:
    V_N_to_Np1: np.ndarray
    V_Np1_to_N: np.ndarray
    Dtilde: list


@lru_cache(maxsize=None)
def interp_operators(dim: int, N: int) -> InterpOperators:
    nodes_N = interpolation_nodes(dim, N).nodes
    nodes_Np1 = interpolation_nodes(dim, N + 1).nodes
    return InterpOperators(interp_matrix(dim, N, nodes_Np1),
                           interp_matrix(dim, N + 1, nodes_N),
                           nodal_diff_matrices(dim, N + 1))


@lru_cache(maxsize=None)
def _point_operators(dim: int, N: int, key: tuple):
    pts = np.array(key[1]).reshape(-1, dim)
    return interp_matrix(dim, N, pts), nodal_diff_matrices(dim, N, pts)


def _pt_ops(dim, N, pts):
    return _point_operators(dim, N, (pts.shape, tuple(np.round(pts.ravel(), 15))))


def _apply(A, x):
    return np.einsum("pq,kq...->kp...", A, x)


def _cofactor(A: np.ndarray) -> np.ndarray:
    """G = J A^{-T} from A[..., i, j] = dx_i/dxhat_j."""
    if A.shape[-1] == 2:
        G = np.empty_like(A)
        G[..., 0, 0] = A[..., 1, 1]
        G[..., 0, 1] = -A[..., 1, 0]
        G[..., 1, 0] = -A[..., 0, 1]
        G[..., 1, 1] = A[..., 0, 0]
        return G
    cols = [A[..., :, j] for j in range(3)]
    return np.stack([np.cross(cols[(j + 1) % 3], cols[(j + 2) % 3]) for j in range(3)],
                    axis=-1)


# (physical row, x_p, x_q, sign): row i of G is sign * curl(x_p grad x_q)
_CURL_ROWS = ((2, 1, -1.0), (2, 0, 1.0), (0, 1, 1.0))


def _curl_metrics(x: np.ndarray, D: list) -> np.ndarray:
    """Nodal conservative-curl metrics, (K, Np, 3, 3)."""
    K, Np, _ = x.shape
    G = np.empty((K, Np, 3, 3))
    for row, (p, q, sign) in enumerate(_CURL_ROWS):
        w = [x[..., p] * _apply(D[j], x[..., q]) for j in range(3)]
        for i in range(3):
            a, b = (i + 1) % 3, (i + 2) % 3
            G[:, :, row, i] = sign * (_apply(D[a], w[b]) - _apply(D[b], w[a]))
    return G


def geometric_factors(mesh: Mesh, ops: ReferenceOperators, mode: str | None = None,
                      check: bool = True) -> ElementGeometry:
    """Metric terms, Jacobians and scaled normals at quadrature points.

    Parameters
    ----------
    mode : {"exact2d", "cross", "curlN", "curlNp1"}
        ``cross`` evaluates the cross-product form of the isoparametric
        map at quadrature points (exact2d in 2D).  The curl modes build a
        conservative curl form at degree N or N+1 and interpolate it.  2D
        meshes always use the cross-product form, which already satisfies
        the discrete GCL there.  Defaults: exact2d in 2D, curlNp1 in 3D.
    """
    dim, N = mesh.dim, ops.N
    if mesh.x is None or mesh.N != N:
        raise GeometryError("mesh nodes must be placed at the operator degree")
    mode = mode or ("exact2d" if dim == 2 else "curlNp1")
    if mode not in ("exact2d", "cross", "curlN", "curlNp1"):
        raise GeometryError(f"unknown metric mode '{mode}'")
    if dim == 2 or mode == "exact2d":
        mode = "exact2d" if dim == 2 else "cross"
    pts = np.vstack([ops.quad.points, ops.face_points])
    Nq = ops.Nq
    I, Dp = _pt_ops(dim, N, pts)
    A = np.stack([_apply(Dj, mesh.x) for Dj in Dp], axis=-1)  # (K, npts, d, d)
    sign = mesh.orientation[:, None]
    J = np.linalg.det(A) * sign
    if mode in ("exact2d", "cross"):
        G = _cofactor(A)
    else:
        if mode == "curlNp1":
            io = interp_operators(dim, N)
            Gn = _curl_metrics(_apply(io.V_N_to_Np1, mesh.x), io.Dtilde)
            Gn = _apply(io.V_Np1_to_N, Gn)
        else:
            Gn = _curl_metrics(mesh.x, nodal_diff_matrices(dim, N))
        G = _apply(I, Gn)
    # J stores |det|; the sign keeps G J-weighted and normals outward
    G = np.moveaxis(G, 1, -1) * sign[:, :, None, None]
    bad = np.where(~(J > 0).all(axis=1))[0]
    if len(bad):
        raise GeometryError(f"nonpositive Jacobian in element {bad[0]}")
    Gf = G[..., Nq:]
    nJf = np.einsum("kijq,jq->kiq", Gf, ops.nhatJ)
    Jf = np.linalg.norm(nJf, axis=1)
    h = (J[:, Nq:] / Jf).max(axis=1)
    xall = _apply(I, mesh.x)
    mapP = face_permutation(mesh, ops)
    geo = ElementGeometry(mode, J, G, nJf, Jf, h, xall[:, :Nq], xall[:, Nq:], mapP)
    if check and mode != "cross":
        res = gcl_residual(geo, ops)
        if res.max() > GCL_ERROR_TOL:
            raise GeometryError(f"discrete GCL violated ({res.max():.2e}) in element "
                                f"{int(res.argmax())}; face nodes may not match")
    return geo


def face_permutation(mesh: Mesh, ops: ReferenceOperators) -> np.ndarray:
    """Flat index of the exterior partner of every surface quadrature point.

    Matching uses affine images of the face points, shifted by the
    period where needed; boundary points map to themselves.
    """
    K, nf, nfq = mesh.K, mesh.num_faces, ops.nfq
    xf = affine_map(mesh, ops.face_points).reshape(K, nf, nfq, mesh.dim)
    mapP = np.arange(K * nf * nfq).reshape(K, nf, nfq)
    scale = np.linalg.norm(mesh.VX[mesh.EToV[:, 1]] - mesh.VX[mesh.EToV[:, 0]], axis=1)
    for k in range(K):
        for f in range(nf):
            kn, fn = mesh.EToE[k, f], mesh.EToF[k, f]
            if kn == k and fn == f:
                continue
            xa = xf[k, f]
            xb = xf[kn, fn]
            diff = mesh.periodic_delta(xa[:, None, :] - xb[None, :, :])
            dist = np.linalg.norm(diff, axis=2)
            idx = dist.argmin(axis=1)
            if dist[np.arange(nfq), idx].max() > 1e-8 * scale[k]:
                raise MeshError(f"face {f} of element {k} does not match its neighbour")
            mapP[k, f] = (kn * nf + fn) * nfq + idx
    return mapP.reshape(K, nf * nfq)


def gcl_residual(geo: ElementGeometry, ops: ReferenceOperators) -> np.ndarray:
    """Per-element max_i |sum_j D_N^j G_ij| relative to max |G|."""
    Nq = ops.Nq
    K, d = geo.G.shape[:2]
    res = np.zeros((K, d, geo.G.shape[-1]))
    for j in range(d):
        Gq = geo.G[:, :, j, :Nq]
        Gf = geo.G[:, :, j, Nq:]
        res[..., :Nq] += Gq @ ops.Dqq[j].T + Gf @ ops.Dqf[j].T
        res[..., Nq:] += Gq @ ops.Dfq[j].T + Gf * ops.Dff[j]
    scale = np.abs(geo.G).reshape(K, -1).max(axis=1)
    return np.abs(res).reshape(K, -1).max(axis=1) / scale


def normal_opposition(geo: ElementGeometry) -> np.ndarray:
    """Per-element max |nJf + nJf^+| relative to max |nJf|."""
    K, d, Nqf = geo.nJf.shape
    flat = np.moveaxis(geo.nJf, 1, 0).reshape(d, -1)
    plus = flat[:, geo.mapP.ravel()].reshape(d, K, Nqf)
    interior = geo.mapP != np.arange(K * Nqf).reshape(K, Nqf)
    err = np.abs(np.moveaxis(geo.nJf, 1, 0) + plus) * interior
    return err.max(axis=(0, 2)) / np.abs(geo.nJf).max()


def mesh_size(geo: ElementGeometry) -> float:
    return float(geo.h.max())


def verify_geometry(mesh: Mesh, geo: ElementGeometry, ops: ReferenceOperators) -> dict:
    """Per-element invariant report plus global maxima."""
    gcl = gcl_residual(geo, ops)
    opp = normal_opposition(geo)
    return {
        "element_id": np.arange(mesh.K),
        "gcl_residual": gcl,
        "normal_opposition": opp,
        "min_J": geo.J.min(axis=1),
        "h_k": geo.h,
        "max_gcl": float(gcl.max()),
        "max_opposition": float(opp.max()),
        "min_J_global": float(geo.J.min()),
    }


def metric_convergence_study(N: int = 3, cells=(2, 4, 8, 12), modes=("curlNp1", "curlN"),
                             warp: str = "cos3d") -> list:
    """Errors of interpolated metric terms on a warped tetrahedral family.

    The reference is the cross-product form of the degree-N
    isoparametric map at volume quadrature points; errors are
    J-weighted L2 norms over all entries of G on [-1, 1]^3.

    Returns
    -------
    list of dict with keys h and ``err_<mode>`` per mode.
    """
    from .operators import build_reference_operators

    ops = build_reference_operators(3, N)
    Nq = ops.Nq
    rows = []
    for n in cells:
        mesh = generate_box_mesh(3, [(-1.0, 1.0)] * 3, [n] * 3, periodic=False)
        mesh = curve_nodes(place_nodes(mesh, N), warp)
        exact = geometric_factors(mesh, ops, "cross")
        row = {"h": mesh_size(exact)}
        for mode in modes:
            geo = geometric_factors(mesh, ops, mode)
            e = geo.G[..., :Nq] - exact.G[..., :Nq]
            err2 = np.sum(ops.wq * exact.Jq * np.sum(e * e, axis=(1, 2)))
            row[f"err_{mode}"] = float(np.sqrt(err2))
        rows.append(row)
    return rows
