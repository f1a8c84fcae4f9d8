"""Algebraically stabilized P1 finite elements on adaptively refined grids."""

from .adapt import adaptive_loop, mark_cells, solve_on_mesh
from .assembly import assemble_galerkin, apply_dirichlet, error_norms, SparseSystem
from .bench import osc_max, run_experiment, smear_int, write_metrics_csv
from .constraints import (
    expand_solution,
    reduce_nonhanging,
    to_conforming_ansatz,
    to_conforming_test,
)
from .estimator import EstimatorConstants, estimate, localize_for_marking
from .mesh import (
    CircleBoundary,
    ConstraintSet,
    Triangulation,
    conforming_closure,
    delaunay_report,
    hanging_constraints,
    project_boundary,
    refine_regular,
    unit_square_mesh,
)
from .problem import builtin_problem, evaluate_exact
from .solver import fixed_point_solve, linear_solve
from .stabilization import (
    artificial_diffusion,
    assemble_stabilization,
    bjk_geometry,
    compute_limiters,
    nonlinear_residual,
    Stabilizer,
)

__all__ = [
    "CircleBoundary",
    "ConstraintSet",
    "EstimatorConstants",
    "SparseSystem",
    "Stabilizer",
    "Triangulation",
    "adaptive_loop",
    "apply_dirichlet",
    "artificial_diffusion",
    "assemble_galerkin",
    "assemble_stabilization",
    "bjk_geometry",
    "builtin_problem",
    "compute_limiters",
    "conforming_closure",
    "delaunay_report",
    "error_norms",
    "estimate",
    "evaluate_exact",
    "expand_solution",
    "fixed_point_solve",
    "hanging_constraints",
    "linear_solve",
    "localize_for_marking",
    "mark_cells",
    "nonlinear_residual",
    "osc_max",
    "project_boundary",
    "reduce_nonhanging",
    "refine_regular",
    "run_experiment",
    "smear_int",
    "solve_on_mesh",
    "to_conforming_ansatz",
    "to_conforming_test",
    "unit_square_mesh",
    "write_metrics_csv",
]

__version__ = "0.1.0"
