"""Kernel-free boundary integral method for elliptic boundary and interface problems in 2D.

Layer and volume potentials are never evaluated from kernels. Each one is the
grid solution of an equivalent interface problem, computed with a corrected
fourth-order compact scheme and a fast sine-transform solver, and the
boundary integral equations are solved matrix-free with GMRES.
"""
from .bie import (
    BIESolution,
    ConvergenceError,
    Discretization,
    FormulationSpec,
    GMRESResult,
    eval_potential,
    gmres,
    solve,
    solve_dirichlet_bvp,
    solve_interface_single_density,
    solve_interface_two_density,
    solve_neumann_bvp,
)
from .experiment import RunConfig, RunReport, convergence_order, load_config, run_experiment
from .fast_solver import CompactStencil, FastSolver, solve_compact
from .geometry import Circle, Ellipse, Geometry, GeometryError, Star, build_surface_mesh, find_intersection
from .grid import Grid2D, build_grid, classify_nodes
from .interface import InterfaceSolution, InterfaceSolver, Source, Traces

__all__ = [
    "BIESolution",
    "Circle",
    "CompactStencil",
    "ConvergenceError",
    "Discretization",
    "Ellipse",
    "FastSolver",
    "FormulationSpec",
    "GMRESResult",
    "Geometry",
    "GeometryError",
    "Grid2D",
    "InterfaceSolution",
    "InterfaceSolver",
    "RunConfig",
    "RunReport",
    "Source",
    "Star",
    "Traces",
    "build_grid",
    "build_surface_mesh",
    "classify_nodes",
    "convergence_order",
    "eval_potential",
    "find_intersection",
    "gmres",
    "load_config",
    "run_experiment",
    "solve",
    "solve_compact",
    "solve_dirichlet_bvp",
    "solve_interface_single_density",
    "solve_interface_two_density",
    "solve_neumann_bvp",
]
