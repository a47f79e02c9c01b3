"""In-house LP / MILP / QCP / MIQCP solvers built on one simplex core."""

from __future__ import annotations

from ..errors import ConfigError
from .bnb import BranchAndCut
from .check import is_feasible, violations
from .types import DEFAULT_TOL, QuadConstraint, Solution, StandardProblem, Status, Tolerances

__all__ = ["QuadConstraint", "Solution", "StandardProblem", "Status", "Tolerances",
           "solve", "solve_lp", "solve_milp", "solve_qcp", "solve_miqcp",
           "is_feasible", "violations"]


def solve(prob: StandardProblem, tol: Tolerances = DEFAULT_TOL) -> Solution:
    """Dispatch on problem class; every class runs through branch-and-cut."""
    return BranchAndCut(prob, tol).solve()


def solve_lp(prob: StandardProblem, tol: Tolerances = DEFAULT_TOL) -> Solution:
    if prob.quads or prob.binaries.size:
        raise ConfigError("solve_lp takes a problem without quadratics or binaries")
    return solve(prob, tol)


def solve_milp(prob: StandardProblem, tol: Tolerances = DEFAULT_TOL) -> Solution:
    if prob.quads:
        raise ConfigError("solve_milp takes a problem without quadratic constraints")
    return solve(prob, tol)


def solve_qcp(prob: StandardProblem, tol: Tolerances = DEFAULT_TOL) -> Solution:
    if prob.binaries.size:
        raise ConfigError("solve_qcp takes a problem without binaries")
    return solve(prob, tol)


def solve_miqcp(prob: StandardProblem, tol: Tolerances = DEFAULT_TOL) -> Solution:
    return solve(prob, tol)
