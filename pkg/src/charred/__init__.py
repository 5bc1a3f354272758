"""Second-order nonlinear PDEs reduced to first-order ODEs along characteristics."""

from .estimator import CharacteristicSolver
from .integrate import IntegratorConfig
from .problem import (
    BUILTIN_IDS,
    ClassOneSpec,
    ClassTwoSpec,
    GridSpec,
    InitialData,
    OracleSpec,
    ProblemCase,
    ProblemError,
    builtin_example,
    load_problem,
)
from .reduce import classify_reduced, describe, real_root_K
from .solve import SolutionGrid, estimate_blowup_time, solve_along_characteristic, solve_on_grid
from .verify import ResidualReport, fd_residual, implicit_residual, oracle_compare

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_IDS",
    "CharacteristicSolver",
    "ClassOneSpec",
    "ClassTwoSpec",
    "GridSpec",
    "InitialData",
    "IntegratorConfig",
    "OracleSpec",
    "ProblemCase",
    "ProblemError",
    "ResidualReport",
    "SolutionGrid",
    "builtin_example",
    "classify_reduced",
    "describe",
    "estimate_blowup_time",
    "fd_residual",
    "implicit_residual",
    "load_problem",
    "oracle_compare",
    "real_root_K",
    "solve_along_characteristic",
    "solve_on_grid",
]
