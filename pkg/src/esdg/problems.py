"""Initial conditions and exact solutions.

Every problem is a function ``f(x, t, **params)`` returning conservative
variables with the field axis first, shape ``(d + 2,) + x.shape[:-1]``.
"""

from __future__ import annotations

import numpy as np

from .euler import GAMMA, cons_from_prim


def _wrap(d, L):
    if L and L > 0:
        return d - L * np.round(d / L)
    return d


def pulse(x, t=0.0, gamma=GAMMA, period=(20.0, 10.0), rho_in=3.0, rho_out=2.0,
          half_width=0.5):
    """Square density pulse at rest with p = rho^gamma.

    The square ``|x1|, |x2| < half_width`` is taken modulo the period so
    that the pulse straddling x1 = 0 is continued across the boundary.
    """
    x1 = _wrap(x[..., 0], period[0])
    x2 = _wrap(x[..., 1], period[1])
    inside = (np.abs(x1) < half_width) & (np.abs(x2) < half_width)
    rho = np.where(inside, rho_in, rho_out)
    vel = np.zeros((2,) + rho.shape)
    return cons_from_prim(rho, vel, rho ** gamma, gamma)


def vortex2d(x, t=0.0, gamma=GAMMA, c1=5.0, c2=0.0, beta=5.0, period=(20.0, 10.0)):
    """Isentropic vortex advected with unit speed in x1."""
    dx = _wrap(x[..., 0] - c1 - t, period[0])
    dy = _wrap(x[..., 1] - c2, period[1])
    r2 = dx * dx + dy * dy
    a = np.exp(1.0 - r2)
    rho = (1.0 - 0.5 * (gamma - 1.0) * (beta * a) ** 2
           / (8.0 * gamma * np.pi ** 2)) ** (1.0 / (gamma - 1.0))
    s = beta / (2.0 * np.pi) * a
    vel = np.stack([1.0 - s * dy, s * dx])
    return cons_from_prim(rho, vel, rho ** gamma, gamma)


def vortex3d(x, t=0.0, gamma=GAMMA, c1=5.0, c2=5.0, p0=None, pi_max=0.4,
             period=(10.0, 20.0, 10.0)):
    """Extruded isentropic vortex advected with unit speed in x2."""
    p0 = 1.0 / gamma if p0 is None else p0
    r1 = -_wrap(x[..., 1] - c2 - t, period[1])
    r2 = _wrap(x[..., 0] - c1, period[0])
    Pi = pi_max * np.exp(0.5 * (1.0 - r1 * r1 - r2 * r2))
    T = 1.0 - 0.5 * (gamma - 1.0) * Pi ** 2
    rho = T ** (1.0 / (gamma - 1.0))
    p = p0 * T ** (gamma / (gamma - 1.0))
    vel = np.stack([Pi * r1, 1.0 + Pi * r2, np.zeros_like(Pi)])
    return cons_from_prim(rho, vel, p, gamma)


def taylor_green(x, t=0.0, gamma=GAMMA):
    """Inviscid Taylor-Green initial data on [-pi, pi]^3."""
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    rho = np.ones_like(x1)
    vel = np.stack([np.sin(x1) * np.cos(x2) * np.cos(x3),
                    -np.cos(x1) * np.sin(x2) * np.cos(x3),
                    np.zeros_like(x1)])
    p = 100.0 / gamma + (np.cos(2 * x1) + np.cos(2 * x2)) * (2.0 + np.cos(2 * x3)) / 16.0
    return cons_from_prim(rho, vel, p, gamma)


def constant(x, t=0.0, gamma=GAMMA, rho=1.0, velocity=0.1, p=1.0):
    """Uniform free-stream state."""
    dim = x.shape[-1]
    shape = x.shape[:-1]
    vel = np.broadcast_to(np.asarray(velocity, dtype=float).reshape(-1, *([1] * len(shape))),
                          (dim,) + shape)
    return cons_from_prim(np.full(shape, rho), vel, np.full(shape, p), gamma)


PROBLEMS = {
    "pulse": pulse,
    "vortex2d": vortex2d,
    "vortex3d": vortex3d,
    "taylorgreen": taylor_green,
    "constant": constant,
}

# problems whose formula is an exact solution for all t
EXACT = {"vortex2d", "vortex3d", "constant"}


def get_problem(name: str):
    try:
        return PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown initial condition '{name}'; choose from {sorted(PROBLEMS)}") from None
