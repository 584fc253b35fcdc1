"""Convergence for the isentropic vortex on quasi-uniform triangles.

The vortex is an exact solution translating with unit speed, so the L2
error at the final time measures the discretization error directly.
The package ships three periodic quasi-uniform meshes of [0,20]x[-5,5]
(edge lengths 2, 1 and 0.5).  The finest level takes a few minutes, so
this demo uses the two coarser meshes and a shorter final time.  Use
``esdg run vortex2d`` for the full study.

Run:  python demos/05_vortex_convergence.py
"""

import math

import numpy as np

from esdg import config
from esdg.experiments import run_level

for warp in ("identity", "vortex2d"):
    cfg = config.apply_overrides(config.load_preset("vortex2d"),
                                 [f"mesh.warp={warp}", "run.degree=2", "run.final_time=1.0",
                                  "output.interval=0"])
    errs = []
    for level in (0, 1):
        res = run_level(cfg, 2, level)
        errs.append(float(np.sqrt(np.sum(res.errors ** 2))))
        print(f"{warp:>9} h={cfg.mesh.levels[level]:<4} dof={res.dof:>6} error {errs[-1]:.4e}")
    print(f"{'':>9} rate {math.log(errs[0] / errs[1]) / math.log(2):.2f}\n")
