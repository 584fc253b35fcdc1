"""Optional compiled flux-differencing kernel.

The kernel fuses the pair gather, the two-point flux, the averaged
metric contraction and the scatter, avoiding the temporaries of the
vectorized path.  It is used only when numba is importable; results
agree with the numpy path to roundoff.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised without numba
    numba = None
    HAVE_NUMBA = False


def _log_mean(a, b, la, lb):
    zeta = (a - b) / (a + b)
    f = zeta * zeta
    if f < 1e-4:
        return (a + b) / (2.0 * (1.0 + f * (1.0 / 3.0 + f * (1.0 / 5.0 + f / 7.0))))
    return (a - b) / (la - lb)


def _volume_kernel(rho, vel, beta, lrho, lbeta, G, pm, pn, S, gamma, out):
    """out[f, k, :] = (S_k o F) 1 for every element k."""
    K = rho.shape[0]
    d = vel.shape[0]
    P = pm.shape[0]
    C = np.empty(d)
    ubar = np.empty(d)
    for k in range(K):
        for q in range(out.shape[2]):
            for f in range(out.shape[0]):
                out[f, k, q] = 0.0
        for p in range(P):
            m = pm[p]
            n = pn[p]
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += S[j, p] * 0.5 * (G[k, i, j, m] + G[k, i, j, n])
                C[i] = acc
            rl = _log_mean(rho[k, m], rho[k, n], lrho[k, m], lrho[k, n])
            bl = _log_mean(beta[k, m], beta[k, n], lbeta[k, m], lbeta[k, n])
            ravg = 0.5 * (rho[k, m] + rho[k, n])
            bavg = 0.5 * (beta[k, m] + beta[k, n])
            pavg = ravg / (2.0 * bavg)
            un = 0.0
            v2 = 0.0
            vsq = 0.0
            for i in range(d):
                ubar[i] = 0.5 * (vel[i, k, m] + vel[i, k, n])
                un += C[i] * ubar[i]
                v2 += ubar[i] * ubar[i]
                vsq += vel[i, k, m] * vel[i, k, m] + vel[i, k, n] * vel[i, k, n]
            v2 = 2.0 * v2 - 0.5 * vsq
            Eavg = rl / (2.0 * (gamma - 1.0) * bl) + 0.5 * rl * v2
            g0 = rl * un
            out[0, k, m] += g0
            out[0, k, n] -= g0
            for i in range(d):
                gi = g0 * ubar[i] + C[i] * pavg
                out[1 + i, k, m] += gi
                out[1 + i, k, n] -= gi
            ge = (Eavg + pavg) * un
            out[d + 1, k, m] += ge
            out[d + 1, k, n] -= ge


if HAVE_NUMBA:
    _log_mean = numba.njit(cache=True, inline="always")(_log_mean)
    volume_kernel = numba.njit(cache=True, nogil=True)(_volume_kernel)
else:  # pragma: no cover
    volume_kernel = None
