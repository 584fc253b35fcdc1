"""Compressible Euler physics for entropy-stable discretizations.

States are stored field-first: ``u[0]`` is density, ``u[1:d+1]`` the
momentum components and ``u[d+1]`` the total energy.  Trailing axes are
arbitrary, so every function here works pointwise on whole arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA = 1.4


class PositivityError(ArithmeticError):
    """Raised when a state has nonpositive density or pressure."""

    def __init__(self, message: str, element: int | None = None,
                 time: float | None = None):
        super().__init__(message)
        self.element = element
        self.time = time


@dataclass(frozen=True)
class GasModel:
    gamma: float = GAMMA

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError("gamma must exceed 1")


def _dim(u) -> int:
    return u.shape[0] - 2


def pressure(u, gamma: float = GAMMA):
    rho, E = u[0], u[-1]
    m = u[1:-1]
    return (gamma - 1.0) * (E - 0.5 * np.sum(m * m, axis=0) / rho)


def _check_positive(rho, p) -> None:
    if np.any(~(rho > 0)):
        raise PositivityError("nonpositive density encountered")
    if np.any(~(p > 0)):
        raise PositivityError("nonpositive pressure encountered")


def prim_from_cons(u, gamma: float = GAMMA):
    """Return (rho, velocity, p)."""
    rho = u[0]
    vel = u[1:-1] / rho
    p = pressure(u, gamma)
    return rho, vel, p


def cons_from_prim(rho, vel, p, gamma: float = GAMMA):
    rho = np.asarray(rho, dtype=float)
    vel = np.asarray(vel, dtype=float)
    p = np.asarray(p, dtype=float)
    E = p / (gamma - 1.0) + 0.5 * rho * np.sum(vel * vel, axis=0)
    return np.concatenate([rho[None], rho * vel, E[None]], axis=0)


def specific_entropy(u, gamma: float = GAMMA):
    rho, _, p = prim_from_cons(u, gamma)
    _check_positive(rho, p)
    return np.log(p) - gamma * np.log(rho)


def entropy(u, gamma: float = GAMMA):
    """Mathematical entropy U = -rho s / (gamma - 1)."""
    return -u[0] * specific_entropy(u, gamma) / (gamma - 1.0)


def entropy_vars(u, gamma: float = GAMMA):
    """Entropy variables v = dU/du for U = -rho s / (gamma - 1)."""
    rho, m, E = u[0], u[1:-1], u[-1]
    rhoe = E - 0.5 * np.sum(m * m, axis=0) / rho
    _check_positive(rho, rhoe)
    s = np.log((gamma - 1.0) * rhoe) - gamma * np.log(rho)
    v1 = (rhoe * (gamma + 1.0 - s) - E) / rhoe
    v = np.concatenate([v1[None], m / rhoe, (-rho / rhoe)[None]], axis=0)
    # the bracketed forms above are (gamma - 1) times the gradient of U
    return v / (gamma - 1.0)


def cons_from_entropy(v, gamma: float = GAMMA):
    """Inverse of :func:`entropy_vars`."""
    v = (gamma - 1.0) * np.asarray(v, dtype=float)
    v1, vm, vl = v[0], v[1:-1], v[-1]
    if np.any(~(vl < 0)):
        raise PositivityError("entropy variable v_last must be negative")
    vm2 = np.sum(vm * vm, axis=0)
    s = gamma - v1 + vm2 / (2.0 * vl)
    rhoe = ((gamma - 1.0) / (-vl) ** gamma) ** (1.0 / (gamma - 1.0)) \
        * np.exp(-s / (gamma - 1.0))
    rho = -rhoe * vl
    E = rhoe * (1.0 - vm2 / (2.0 * vl))
    return np.concatenate([rho[None], rhoe * vm, E[None]], axis=0)


def physical_flux(u, gamma: float = GAMMA):
    """Euler fluxes f_j(u), shape (d, d+2, ...)."""
    d = _dim(u)
    rho, vel, p = prim_from_cons(u, gamma)
    E = u[-1]
    out = np.empty((d,) + u.shape, dtype=float)
    for j in range(d):
        out[j, 0] = u[1 + j]
        for i in range(d):
            out[j, 1 + i] = u[1 + i] * vel[j]
        out[j, 1 + j] += p
        out[j, -1] = (E + p) * vel[j]
    return out


def entropy_potential(u, gamma: float = GAMMA):
    """psi_j = rho u_j, shape (d, ...)."""
    return u[1:-1].copy()


def entropy_flux(u, gamma: float = GAMMA):
    """F_j = -rho u_j s / (gamma - 1), shape (d, ...)."""
    return -u[1:-1] * specific_entropy(u, gamma) / (gamma - 1.0)


# ---------------------------------------------------------------------------
# two-point fluxes

def _log_mean_from_logs(a, b, la, lb):
    """Logarithmic mean with precomputed logarithms.

    Uses a series in zeta = (a-b)/(a+b) near a = b, following the
    standard stable evaluation.  The result is bitwise symmetric.
    """
    zeta = (a - b) / (a + b)
    f = zeta * zeta
    small = f < 1e-4
    series = (a + b) / (2.0 * (1.0 + f * (1.0 / 3.0 + f * (1.0 / 5.0 + f / 7.0))))
    dl = np.where(small, 1.0, la - lb)
    return np.where(small, series, (a - b) / dl)


def log_mean(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise ValueError("log_mean requires positive arguments")
    return _log_mean_from_logs(a, b, np.log(a), np.log(b))


@dataclass
class PairState:
    """Per-node quantities reused by every two-point flux evaluation."""

    rho: np.ndarray
    vel: np.ndarray
    beta: np.ndarray
    p: np.ndarray
    log_rho: np.ndarray
    log_beta: np.ndarray
    vel2: np.ndarray

    def take(self, idx, axis: int = -1) -> "PairState":
        return PairState(*(np.take(getattr(self, f), idx, axis=axis)
                           for f in ("rho", "vel", "beta", "p", "log_rho",
                                     "log_beta", "vel2")))


def pair_state(u, gamma: float = GAMMA) -> PairState:
    rho, vel, p = prim_from_cons(u, gamma)
    _check_positive(rho, p)
    beta = 0.5 * rho / p
    return PairState(rho, vel, beta, p, np.log(rho), np.log(beta),
                     np.sum(vel * vel, axis=0))


def ec_flux_pair(L: PairState, R: PairState, gamma: float = GAMMA):
    """Chandrashekar's entropy-conservative flux from cached pair states.

    Returns an array of shape (d, d+2, ...) holding f_{j,S} for every
    coordinate direction j.
    """
    d = L.vel.shape[0]
    rho_log = _log_mean_from_logs(L.rho, R.rho, L.log_rho, R.log_rho)
    beta_log = _log_mean_from_logs(L.beta, R.beta, L.log_beta, R.log_beta)
    rho_avg = 0.5 * (L.rho + R.rho)
    beta_avg = 0.5 * (L.beta + R.beta)
    vel_avg = 0.5 * (L.vel + R.vel)
    p_avg = rho_avg / (2.0 * beta_avg)
    vel2_avg = 2.0 * np.sum(vel_avg * vel_avg, axis=0) - 0.5 * (L.vel2 + R.vel2)
    E_avg = rho_log / (2.0 * (gamma - 1.0) * beta_log) + 0.5 * rho_log * vel2_avg
    out = np.empty((d, d + 2) + rho_log.shape, dtype=float)
    for j in range(d):
        fr = rho_log * vel_avg[j]
        out[j, 0] = fr
        for i in range(d):
            out[j, 1 + i] = fr * vel_avg[i]
        out[j, 1 + j] += p_avg
        out[j, -1] = (E_avg + p_avg) * vel_avg[j]
    return out


def ec_flux(dim: int, uL, uR, gamma: float = GAMMA):
    """Entropy-conservative two-point flux in each coordinate direction."""
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    if uL.shape[0] != dim + 2:
        raise ValueError(f"state must have {dim + 2} fields")
    return ec_flux_pair(pair_state(uL, gamma), pair_state(uR, gamma), gamma)


def sound_speed(u, gamma: float = GAMMA):
    rho, _, p = prim_from_cons(u, gamma)
    _check_positive(rho, p)
    return np.sqrt(gamma * p / rho)


def wavespeed(u, n, gamma: float = GAMMA):
    """|u.n| + c for unit normal ``n`` (shape (d, ...))."""
    rho, vel, _ = prim_from_cons(u, gamma)
    return np.abs(np.sum(vel * n, axis=0)) + sound_speed(u, gamma)


def lf_dissipation(uL, uR, n, gamma: float = GAMMA):
    """Local Lax-Friedrichs penalty -(lambda/2)(uR - uL)."""
    lam = np.maximum(wavespeed(uL, n, gamma), wavespeed(uR, n, gamma))
    return -0.5 * lam * (uR - uL)
