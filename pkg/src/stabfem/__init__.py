"""Stabilized finite elements for convection-dominated transport.

Galerkin, classical artificial diffusion, SU, SUPG and the two-field
MZAD and micromorphic (MMAD) artificial-diffusion schemes on structured
line and bilinear-quad meshes, with a steady solver, a Crank-Nicolson
integrator and the standard benchmark catalog.
"""
from .assembly import (
    CrankNicolson,
    ProblemSpec,
    SchemeOperator,
    SolutionField,
    assemble_mass,
    assemble_steady,
    coercivity_check,
    compute_energy_J,
    condense_mzad,
    constant_field,
    solve_steady,
    solve_system,
    step_crank_nicolson,
)
from .benchmarks import (
    BENCHMARK_NAMES,
    BenchmarkCase,
    ErrorReport,
    HillTrace,
    catalog,
    error_norms,
    exact_1d_steady,
    get_case,
    run_benchmark,
    transient_error_norms,
)
from .discretization import DofLayout, Mesh, build_line_mesh, build_quad_mesh, eval_shape, gauss_rule
from .errors import (
    ConfigParseError,
    ConfigurationError,
    ConvergenceError,
    DegenerateElementError,
    InvalidArgumentError,
    SingularSystemError,
)
from .sparse_linalg import SparseMatrix, from_triplets, impose_dirichlet, solve, spmv
from .stabilization import SCHEMES, SchemeConfig, build_H, build_KA, compute_upwind, supg_test_weight

__version__ = "0.1.0"

__all__ = [
    "assemble_mass",
    "assemble_steady",
    "BENCHMARK_NAMES",
    "BenchmarkCase",
    "build_H",
    "build_KA",
    "build_line_mesh",
    "build_quad_mesh",
    "catalog",
    "coercivity_check",
    "compute_energy_J",
    "compute_upwind",
    "condense_mzad",
    "ConfigParseError",
    "ConfigurationError",
    "constant_field",
    "ConvergenceError",
    "CrankNicolson",
    "DegenerateElementError",
    "DofLayout",
    "error_norms",
    "ErrorReport",
    "eval_shape",
    "exact_1d_steady",
    "from_triplets",
    "gauss_rule",
    "get_case",
    "HillTrace",
    "impose_dirichlet",
    "InvalidArgumentError",
    "Mesh",
    "ProblemSpec",
    "run_benchmark",
    "SchemeConfig",
    "SchemeOperator",
    "SCHEMES",
    "SingularSystemError",
    "SolutionField",
    "solve",
    "solve_steady",
    "solve_system",
    "SparseMatrix",
    "spmv",
    "step_crank_nicolson",
    "supg_test_weight",
    "transient_error_norms",
]
