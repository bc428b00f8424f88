"""Divisible sandpile with threshold m and odometer cutoff, plus its radial scaling limit."""
from .analytic import RadialProblem, RadialSolution, eval_radial, inner_radius_xm, limit_radius, omega, solve_radial
from .engine import Schedule, SandpileState, new_state, regions, stabilize
from .errors import BracketError, CheckFailure, InvalidConfig, NonConvergence, NotApplicable, SandpileError
from .lattice import Direction, LatticeField, discrete_derivative, discrete_laplacian, grow, neighbors

__all__ = [
    "BracketError", "CheckFailure", "Direction", "InvalidConfig", "LatticeField", "NonConvergence",
    "NotApplicable", "RadialProblem", "RadialSolution", "SandpileError", "SandpileState", "Schedule",
    "discrete_derivative", "discrete_laplacian", "eval_radial", "grow", "inner_radius_xm", "limit_radius",
    "neighbors", "new_state", "omega", "regions", "solve_radial", "stabilize",
]
