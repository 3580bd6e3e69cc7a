"""Solver and verification lab for sigma_k / sigma_l equations in gamma*Lap(u)*I -/+ D^2 u."""
from .grid import GridDomain, ProblemSpec, ScalarField
from .hessop import OperatorSpec, gradient_matrix, normalized_value, quotient_value
from .solver import SolverConfig, SolveReport, newton_solve, regularized_sweep

__all__ = [
    "GridDomain",
    "OperatorSpec",
    "ProblemSpec",
    "ScalarField",
    "SolveReport",
    "SolverConfig",
    "gradient_matrix",
    "newton_solve",
    "normalized_value",
    "quotient_value",
    "regularized_sweep",
]
__version__ = "0.1.0"
