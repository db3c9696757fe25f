"""Interior-point SOCP solver and independent KKT residual checks."""
from .ipm import SolveOutcome, SolverSettings, solve
from .residuals import kkt_residuals
from .adapter import ExternalResult, cvxpy_backend, solve_external

__all__ = ["SolveOutcome", "SolverSettings", "solve", "kkt_residuals",
           "ExternalResult", "cvxpy_backend", "solve_external"]
