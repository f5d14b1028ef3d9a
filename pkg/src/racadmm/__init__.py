"""Randomly assembled multi-block ADMM for linearly constrained convex QPs."""

__version__ = "0.1.0"

from .problem import Lcqp, VarKind, ProblemError, load_problem, save_problem, validate
from .admm import Mode, Status, SolverOptions, SolveResult, AssumptionViolation, solve, verify_solution

__all__ = [
    "__version__",
    "Lcqp",
    "VarKind",
    "ProblemError",
    "load_problem",
    "save_problem",
    "validate",
    "Mode",
    "Status",
    "SolverOptions",
    "SolveResult",
    "AssumptionViolation",
    "solve",
    "verify_solution",
]
