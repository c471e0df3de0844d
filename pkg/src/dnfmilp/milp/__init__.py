"""Mixed-binary linear programming: model, simplex, branch-and-bound, LP files."""
from .bnb import solve_branch_and_bound, solve_lp_relaxation
from .lpfile import export_lp, read_lp, read_solution, write_solution
from .model import (FEAS_TOL, INT_TOL, MIP_GAP, MilpModel, ModelError, SolveResult,
                    Status)

__all__ = [
    "FEAS_TOL", "INT_TOL", "MIP_GAP", "MilpModel", "ModelError", "SolveResult", "Status",
    "solve_branch_and_bound", "solve_lp_relaxation", "export_lp", "read_lp",
    "read_solution", "write_solution",
]
