"""Entropy-stable modal DG for the compressible Euler equations on curved simplices.

Modules
-------
refelem     reference simplices, orthonormal bases, nodes and quadrature
operators   reference matrices and decoupled summation-by-parts operators
geometry    meshes, curved nodes, metric terms satisfying the discrete GCL
wadg        weighted and weight-adjusted mass matrices and projections
euler       Euler physics, entropy variables and entropy-conservative fluxes
solver      semi-discrete right-hand side, LSRK time stepping, diagnostics
config, experiments, cli
            TOML experiment presets, CSV output and the ``esdg`` command
"""

from .euler import GAMMA, PositivityError
from .geometry import (build_mesh, curve_nodes, generate_box_mesh, generate_quasi_uniform_mesh,
                       geometric_factors, load_mesh, place_nodes)
from .operators import build_reference_operators
from .solver import RunConfig, build_discretization, compute_rhs, project_initial, run
from .wadg import build_element_mass_ops

__version__ = "0.1.0"

__all__ = [
    "GAMMA", "PositivityError", "build_mesh", "curve_nodes", "generate_box_mesh",
    "generate_quasi_uniform_mesh", "geometric_factors", "load_mesh", "place_nodes",
    "build_reference_operators", "RunConfig", "build_discretization", "compute_rhs",
    "project_initial", "run", "build_element_mass_ops",
]
