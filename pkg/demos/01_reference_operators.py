"""Reference operators on the triangle and the tetrahedron.

The scheme works with modal coefficients in an orthonormal basis and
evaluates nonlinear terms at quadrature points.  Volume and surface
quadrature points are joined into one "hybrid" set, and the decoupled
operator D_N acts on values at all of them at once.  Its weighted form
Q_N = W_N D_N satisfies a summation-by-parts identity,

    Q_N + Q_N^T = B_N,

which is the discrete integration by parts that entropy stability rests
on.  This script builds the operators for a few degrees and prints the
identity residuals next to the sizes of the point sets.

Run:  python demos/01_reference_operators.py
"""

import numpy as np

from esdg.operators import build_reference_operators, verify_operators

print(f"{'dim':>3} {'N':>2} {'Np':>4} {'Nq':>4} {'Nqf':>4}  residuals")
for dim in (2, 3):
    for N in (1, 2, 3, 4):
        ops = build_reference_operators(dim, N)
        res = verify_operators(ops)
        worst = ", ".join(f"{k}={v:.1e}" for k, v in res.items())
        print(f"{dim:>3} {N:>2} {ops.Np:>4} {ops.Nq:>4} {ops.Nqf:>4}  {worst}")

# The basis is orthonormal, so the reference mass matrix is the identity
# and projection onto polynomials is a single matrix product.
ops = build_reference_operators(2, 3)
print("\nmass matrix is identity:", np.allclose(ops.M, np.eye(ops.Np)))

# D_N differentiates polynomials exactly at volume points and returns zero
# at the face points (its face rows only carry boundary corrections).
coeffs = np.random.default_rng(0).standard_normal(ops.Np)
vals = np.concatenate([ops.Vq @ coeffs, ops.Vf @ coeffs])
exact = ops.Vq @ ops.D[0] @ coeffs
print("D_N^1 exact on P^3:", np.allclose((ops.DN(0) @ vals)[:ops.Nq], exact))
