"""Bundled MILP solver: dual simplex LP engine, branch-and-bound, backends."""

from .lp import (
    INFEASIBLE, LIMIT, NONCONVERGED, OPTIMAL, UNBOUNDED,
    LpProblem, SolverError, SolverOptions, SolverOutcome, solve_lp,
)
from .bnb import solve_milp
