"""Optimization engines used by the capability and planning layers."""
from .lp import LinearProgram, LPSolution, solve_lp
from .qp import QuadraticProgram, QPSolution, solve_qp
from .search import AnnealSchedule, SearchResult, simulated_annealing, multistart_descent, dykstra_box_rate

__all__ = [
    "LinearProgram", "LPSolution", "solve_lp",
    "QuadraticProgram", "QPSolution", "solve_qp",
    "AnnealSchedule", "SearchResult", "simulated_annealing", "multistart_descent", "dykstra_box_rate",
]
