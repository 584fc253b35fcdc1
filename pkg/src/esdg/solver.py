"""Entropy-stable modal DG right-hand side, time stepping and diagnostics.

The solution is stored as modal coefficients ``u[k, field, mode]``.
The volume term is the flux-differencing sum over the skew part of the
decoupled SBP operators, evaluated once per unordered point pair.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import euler
from ._kernels import HAVE_NUMBA, volume_kernel
from .euler import GAMMA, PositivityError
from .geometry import ElementGeometry, Mesh, geometric_factors
from .operators import ReferenceOperators, build_reference_operators
from .wadg import (ElementMassOps, apply_inverse_mass, build_element_mass_ops,
                   project_entropy_vars, weighted_integral, weighted_mean_correction)

FLUX_MODES = ("ec", "ec+lf")
PAIR_CHUNK = 200_000

# Carpenter & Kennedy five-stage fourth-order low-storage coefficients
RK4A = np.array([0.0,
                 -567301805773.0 / 1357537059087.0,
                 -2404267990393.0 / 2016746695238.0,
                 -3550918686646.0 / 2091501179385.0,
                 -1275806237668.0 / 842570457699.0])
RK4B = np.array([1432997174477.0 / 9575080441755.0,
                 5161836677717.0 / 13612068292357.0,
                 1720146321549.0 / 2090206949498.0,
                 3134564353537.0 / 4481467310338.0,
                 2277821191437.0 / 14882151754819.0])
RK4C = np.array([0.0,
                 1432997174477.0 / 9575080441755.0,
                 2526269341429.0 / 6820363962896.0,
                 2006345519317.0 / 3224310063776.0,
                 2802321613138.0 / 2924317926251.0])


@dataclass
class RunConfig:
    """Numerical parameters of a run."""

    N: int = 3
    CFL: float = 0.5
    final_time: float = 1.0
    flux_mode: str = "ec+lf"
    mass_mode: str = "wadg"
    projection_mode: str = "wadg"
    conservation_fix: str = "polyJ"
    gamma: float = GAMMA
    output_interval: float = 0.0
    metric_mode: str | None = None
    num_steps: int | None = None

    def __post_init__(self):
        if self.num_steps is not None and self.num_steps < 0:
            raise ValueError("num_steps must be nonnegative")
        if not self.CFL > 0:
            raise ValueError("CFL must be positive")
        if not self.final_time >= 0:
            raise ValueError("final_time must be nonnegative")
        if self.flux_mode not in FLUX_MODES:
            raise ValueError(f"unknown flux mode '{self.flux_mode}'; choose from {FLUX_MODES}")
        if self.projection_mode not in ("wadg", "reference"):
            raise ValueError(f"unknown projection mode '{self.projection_mode}'")


def default_backend() -> str:
    """Volume kernel backend; ESDG_BACKEND=numpy forces the vectorized path."""
    choice = os.environ.get("ESDG_BACKEND", "").lower()
    if choice in ("numpy", "numba"):
        if choice == "numba" and not HAVE_NUMBA:
            raise RuntimeError("ESDG_BACKEND=numba but numba is not installed")
        return choice
    return "numba" if HAVE_NUMBA else "numpy"


def num_threads() -> int:
    try:
        return max(1, int(os.environ.get("ESDG_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class Discretization:
    """Everything the right-hand side needs, built once per mesh."""

    mesh: Mesh
    ops: ReferenceOperators
    geo: ElementGeometry
    emo: ElementMassOps
    pair_m: np.ndarray
    pair_n: np.ndarray
    pair_S: np.ndarray  # (d, P) reference skew entries S^j(m, n)
    scatter: sparse.csr_matrix  # (P, Nq + Nqf): +1 at m, -1 at n
    flux_mode: str = "ec"
    projection_mode: str = "wadg"
    gamma: float = GAMMA
    threads: int = 1
    backend: str = field(default_factory=default_backend)
    domain_volume: float = field(init=False)

    def __post_init__(self):
        self.domain_volume = float(np.sum(self.emo.volume))

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def nfields(self) -> int:
        return self.mesh.dim + 2


def skew_pairs(ops: ReferenceOperators, tol: float = 1e-14):
    """Unordered point pairs (m < n) where some skew operator is nonzero.

    Returns pair indices, the skew entries ``S^j(m, n)`` per direction, and
    the signed incidence matrix used to scatter pair contributions.
    """
    S = np.stack([ops.SN(j) for j in range(ops.dim)])
    Nq = ops.Nq
    ntot = S.shape[1]
    m, n = np.triu_indices(ntot, k=1)
    keep = (m < Nq) & (np.abs(S[:, m, n]).max(axis=0) > tol * np.abs(S).max())
    m, n = m[keep], n[keep]
    P = len(m)
    rows = np.concatenate([np.arange(P), np.arange(P)])
    cols = np.concatenate([m, n])
    vals = np.concatenate([np.ones(P), -np.ones(P)])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(P, ntot))
    return m, n, S[:, m, n], A


def build_discretization(mesh: Mesh, N: int | None = None, config: RunConfig | None = None,
                         ops: ReferenceOperators | None = None,
                         geo: ElementGeometry | None = None) -> Discretization:
    """Assemble operators, geometry and mass data for a periodic mesh."""
    config = config or RunConfig(N=N if N is not None else mesh.N)
    N = config.N if N is None else N
    if not mesh.is_closed:
        raise ValueError("the solver requires a periodic (closed) mesh")
    ops = ops or build_reference_operators(mesh.dim, N)
    geo = geo or geometric_factors(mesh, ops, config.metric_mode)
    emo = build_element_mass_ops(ops, geo, config.mass_mode, config.conservation_fix)
    m, n, Smn, A = skew_pairs(ops)
    return Discretization(mesh, ops, geo, emo, m, n, Smn, A, config.flux_mode,
                          config.projection_mode, config.gamma,
                          threads=num_threads())


# ---------------------------------------------------------------------------
# right-hand side

def _fields_first(a):
    """(K, F, n) -> (F, K, n)."""
    return np.moveaxis(a, 1, 0)


def check_admissible(uq_ff, time=None, gamma=GAMMA, where="volume quadrature"):
    """Raise PositivityError naming the first bad element."""
    rho = uq_ff[0]
    p = euler.pressure(uq_ff, gamma)
    bad = ~(rho > 0) | ~(p > 0)
    if np.any(bad):
        k = int(np.argmax(bad.any(axis=-1)))
        what = "density" if np.any(~(rho[k] > 0)) else "pressure"
        raise PositivityError(f"nonpositive {what} at {where} points of element {k}"
                              + (f" at t={time:.6g}" if time is not None else ""),
                              element=k, time=time)


def entropy_projection(disc: Discretization, u: np.ndarray, time=None):
    """Entropy-projected conservative variables at all quadrature points.

    Returns (u_q, v_h, u_tilde) with u_q (F, K, Nq), v_h (K, F, Np) and
    u_tilde (F, K, Nq + Nqf).
    """
    ops = disc.ops
    uq = _fields_first(u @ ops.Vq.T)
    check_admissible(uq, time, disc.gamma)
    v = euler.entropy_vars(uq, disc.gamma)
    v_h, v_tilde = project_entropy_vars(disc.emo, _fields_first(v), disc.projection_mode)
    vt = _fields_first(v_tilde)
    if np.any(~(vt[-1] < 0)):
        bad = ~(vt[-1] < 0)
        k = int(np.argmax(bad.any(axis=-1)))
        raise PositivityError(f"projected entropy variables inadmissible in element {k}"
                              + (f" at t={time:.6g}" if time is not None else ""),
                              element=k, time=time)
    u_tilde = euler.cons_from_entropy(vt, disc.gamma)
    return uq, v_h, u_tilde


def _volume_chunk(disc: Discretization, ps: euler.PairState, k0: int, k1: int, out):
    """Flux differencing (S_k o F) 1 for elements k0..k1-1 into out[:, k0:k1]."""
    d = disc.dim
    sl = slice(k0, k1)
    sub = euler.PairState(*(getattr(ps, f)[..., sl, :] for f in
                            ("rho", "vel", "beta", "p", "log_rho", "log_beta", "vel2")))
    L = sub.take(disc.pair_m)
    R = sub.take(disc.pair_n)
    fS = euler.ec_flux_pair(L, R, disc.gamma)  # (d, F, Kc, P)
    G = disc.geo.G[sl]
    Gm = G[..., disc.pair_m]
    Gn = G[..., disc.pair_n]
    g = np.zeros(fS.shape[1:])
    for i in range(d):
        C = np.zeros((k1 - k0, len(disc.pair_m)))
        for j in range(d):
            C += disc.pair_S[j] * 0.5 * (Gm[:, i, j] + Gn[:, i, j])
        g += C * fS[i]
    F, Kc, P = g.shape
    r = disc.scatter.T @ g.reshape(F * Kc, P).T
    out[:, sl] = r.T.reshape(F, Kc, -1)


def _kernel_chunk(disc: Discretization, ps: euler.PairState, k0: int, k1: int, out):
    sl = slice(k0, k1)
    volume_kernel(ps.rho[sl], ps.vel[:, sl], ps.beta[sl], ps.log_rho[sl],
                  ps.log_beta[sl], disc.geo.G[sl], disc.pair_m, disc.pair_n,
                  disc.pair_S, float(disc.gamma), out[:, sl])


def volume_term(disc: Discretization, u_tilde: np.ndarray,
                backend: str | None = None) -> np.ndarray:
    """Skew flux-differencing term at hybrid points, shape (F, K, Nq + Nqf).

    ``backend`` is "numba" (compiled kernel, default when available) or
    "numpy".  Elements are split into fixed chunks; each chunk writes a
    disjoint slice, so results do not depend on the thread count.
    """
    backend = backend or disc.backend
    ps = euler.pair_state(u_tilde, disc.gamma)
    K = disc.mesh.K
    out = np.empty(u_tilde.shape)
    if backend == "numba":
        work, chunk = _kernel_chunk, max(1, -(-K // max(1, disc.threads)))
    else:
        work, chunk = _volume_chunk, max(1, PAIR_CHUNK // max(1, len(disc.pair_m)))
    bounds = [(k, min(K, k + chunk)) for k in range(0, K, chunk)]
    if disc.threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(disc.threads) as pool:
            list(pool.map(lambda b: work(disc, ps, b[0], b[1], out), bounds))
    else:
        for k0, k1 in bounds:
            work(disc, ps, k0, k1, out)
    return out


def surface_term(disc: Discretization, u_tilde: np.ndarray) -> np.ndarray:
    """Weighted interface flux W_f (sum_i nJf_i f*_i - lambda/2 J_f [[u]]).

    Shape (F, K, Nqf).  The consistent-flux term ``f(u_f)`` cancels
    against the boundary part of ``2 (Q_k o F) 1`` and is omitted along
    with it.
    """
    ops, geo = disc.ops, disc.geo
    Nq = ops.Nq
    F, K = u_tilde.shape[:2]
    uf = u_tilde[..., Nq:]
    uP = uf.reshape(F, -1)[:, geo.mapP.ravel()].reshape(uf.shape)
    fS = euler.ec_flux(disc.dim, uf, uP, disc.gamma)
    nJ = np.moveaxis(geo.nJf, 1, 0)  # (d, K, Nqf)
    flux = np.einsum("ikq,ifkq->fkq", nJ, fS)
    if disc.flux_mode == "ec+lf":
        n = nJ / geo.Jf
        flux = flux + geo.Jf * euler.lf_dissipation(uf, uP, n, disc.gamma)
    return flux * ops.wf


def weak_rhs(disc: Discretization, u_tilde: np.ndarray) -> np.ndarray:
    """Test the spatial operator against the basis: b with du/dt = -M^{-1} b."""
    ops = disc.ops
    Nq = ops.Nq
    r = volume_term(disc, u_tilde)
    s = surface_term(disc, u_tilde)
    b = r[..., :Nq] @ ops.Vq + (r[..., Nq:] + s) @ ops.Vf
    return _fields_first(b)  # (K, F, Np)


@dataclass
class RHSInfo:
    dudt: np.ndarray
    entropy_rhs: float
    u_q: np.ndarray
    v_h: np.ndarray


def compute_rhs(disc: Discretization, u: np.ndarray, time: float | None = None,
                info: bool = False):
    """Time derivative of the modal coefficients ``u`` (K, F, Np)."""
    uq, v_h, u_tilde = entropy_projection(disc, u, time)
    b = weak_rhs(disc, u_tilde)
    emo = disc.emo
    dudt = -apply_inverse_mass(emo, b)
    if emo.mode == "wadg" and emo.fix == "mean_correct":
        dudt = weighted_mean_correction(emo, -(b @ emo.c1), dudt)
    if not info:
        return dudt
    erhs = -float(np.sum(v_h * b))
    return RHSInfo(dudt, erhs, uq, v_h)


def volume_term_dense(disc: Discretization, u_tilde: np.ndarray, k: int) -> np.ndarray:
    """Brute-force sum_i 2 (Q_k^i o F_i) 1 for one element (F, Nq + Nqf).

    Builds every flux matrix and the averaged-metric SBP matrices
    explicitly.  Only meant as a reference for tests.
    """
    ops, d = disc.ops, disc.dim
    ut = u_tilde[:, k]
    ntot = ut.shape[-1]
    a, b = np.meshgrid(np.arange(ntot), np.arange(ntot), indexing="ij")
    FS = euler.ec_flux(d, ut[:, a], ut[:, b], disc.gamma)  # (d, F, n, n)
    G = disc.geo.G[k]
    out = np.zeros(ut.shape)
    for i in range(d):
        Qk = np.zeros((ntot, ntot))
        for j in range(d):
            avg = 0.5 * (G[i, j][:, None] + G[i, j][None, :])
            Qk += ops.QN(j) * avg
        out += 2.0 * np.einsum("mn,fmn->fm", Qk, FS[i])
    return out


# ---------------------------------------------------------------------------
# time stepping

def compute_dt(geo: ElementGeometry, N: int, CFL: float) -> float:
    """CFL * min_k max J / (C_N max J_f) with C_N = (N+1)(N+d)/d."""
    d = geo.G.shape[1]
    CN = (N + 1) * (N + d) / d
    ratio = geo.J.max(axis=1) / geo.Jf.max(axis=1)
    return float(CFL * ratio.min() / CN)


def lsrk45_step(u: np.ndarray, rhs_fn, dt: float, t: float = 0.0) -> np.ndarray:
    """One low-storage RK step; ``rhs_fn(u, t)`` returns du/dt."""
    if dt == 0:
        return u.copy()
    u = np.array(u, dtype=float, copy=True)
    res = np.zeros_like(u)
    for a, b, c in zip(RK4A, RK4B, RK4C):
        res *= a
        res += dt * rhs_fn(u, t + c * dt)
        u += b * res
    return u


# ---------------------------------------------------------------------------
# diagnostics and driver

DIAG_FIELDS = ("time", "entropy", "entropy_rhs", "cons_res", "kinetic_energy",
               "min_rho", "min_p")


@dataclass
class DiagnosticsRecord:
    time: float
    entropy: float
    entropy_rhs: float
    cons_res: np.ndarray
    kinetic_energy: float
    min_rho: float
    min_p: float

    def as_row(self) -> list:
        return [self.time, self.entropy, self.entropy_rhs, *self.cons_res,
                self.kinetic_energy, self.min_rho, self.min_p]


def diagnostic_columns(dim: int) -> list:
    m = [f"cons_res_m{i + 1}" for i in range(dim)]
    return ["time", "entropy", "entropy_rhs", "cons_res_rho", *m, "cons_res_E",
            "kinetic_energy", "min_rho", "min_p"]


def total_entropy(disc: Discretization, u: np.ndarray) -> float:
    uq = _fields_first(u @ disc.ops.Vq.T)
    U = euler.entropy(uq, disc.gamma)
    w = disc.emo.J * disc.ops.wq
    return float(np.sum(np.sum(U * w, axis=1)))


def diagnostics(disc: Discretization, u: np.ndarray, time: float = 0.0) -> DiagnosticsRecord:
    """Entropy, entropy RHS, conservation residual and kinetic energy."""
    inf = compute_rhs(disc, u, time, info=True)
    w = disc.emo.J * disc.ops.wq
    uq = inf.u_q
    U = euler.entropy(uq, disc.gamma)
    # element sums first, then a fixed-order sum over elements
    ent = float(np.sum(np.sum(U * w, axis=1)))
    cons = weighted_integral(disc.emo, inf.dudt).sum(axis=0)
    rho, vel, p = euler.prim_from_cons(uq, disc.gamma)
    ke = np.sum(np.sum(rho * np.sum(vel * vel, axis=0) * w, axis=1)) / disc.domain_volume
    return DiagnosticsRecord(time, ent, inf.entropy_rhs, cons, float(ke),
                             float(rho.min()), float(p.min()))


@dataclass
class RunResult:
    records: list
    u: np.ndarray
    time: float
    steps: int
    dt: float


def run(disc: Discretization, u0: np.ndarray, config: RunConfig, callback=None) -> RunResult:
    """Integrate from t = 0 to ``config.final_time`` with LSRK-45.

    Diagnostics are recorded at t = 0, every ``output_interval`` (each
    step when it is 0) and at the final time.  When ``num_steps`` is set
    the run takes exactly that many full steps instead.
    """
    dt = compute_dt(disc.geo, disc.ops.N, config.CFL)
    T = config.final_time
    if config.num_steps is not None:
        T = config.num_steps * dt
    u = np.array(u0, dtype=float, copy=True)
    t = 0.0
    records = [diagnostics(disc, u, t)]
    if callback:
        callback(records[-1], u)
    if config.num_steps is not None:
        nsteps = config.num_steps
    else:
        nsteps = int(math.ceil(T / dt - 1e-10)) if T > 0 else 0
    next_out = config.output_interval

    def rhs(v, s):
        return compute_rhs(disc, v, s)

    for step in range(nsteps):
        h = min(dt, T - t) if step == nsteps - 1 else dt
        u = lsrk45_step(u, rhs, h, t)
        t = T if step == nsteps - 1 else t + h
        last = step == nsteps - 1
        if last or config.output_interval <= 0 or t >= next_out - 1e-12:
            records.append(diagnostics(disc, u, t))
            if callback:
                callback(records[-1], u)
            if config.output_interval > 0:
                while next_out <= t + 1e-12:
                    next_out += config.output_interval
    return RunResult(records, u, t, nsteps, dt)


def project_initial(disc: Discretization, fun) -> np.ndarray:
    """Curved L2 projection of an initial condition ``fun(x) -> (F, ...)``."""
    from .wadg import project

    vals = np.asarray(fun(disc.geo.xq), dtype=float)  # (F, K, Nq)
    emo = disc.emo
    u = project(emo, _fields_first(vals), "wadg")
    return u


def l2_error(disc: Discretization, u: np.ndarray, exact) -> np.ndarray:
    """Per-field L2 errors against ``exact(x) -> (F, ...)``.

    Integrals use the degree-(2N+1) volume rule on the curved elements.
    """
    uq = _fields_first(u @ disc.ops.Vq.T)
    ex = np.asarray(exact(disc.geo.xq), dtype=float)
    w = disc.emo.J * disc.ops.wq
    return np.sqrt(np.sum(np.sum((uq - ex) ** 2 * w, axis=-1), axis=-1))
