"""Optimal periodic allocation of a fixed effort budget.

The effort is a T-periodic non-negative measure of mass ``T * eta_bar`` per
period; it drives the linear state ``S' = c - (eta + delta) S`` and the goal
is to minimize the period average of ``w S``.
"""

from .analytic import (
    HypothesisError,
    SubThresholdError,
    analyze,
    classify_discontinuities,
    closed_form_solution,
    concentration_function,
    eta_bar_threshold,
    eta_star,
    pure_atom_threshold,
)
from .firstorder import certificate, gradient, h_function, psi_function
from .forward import cost, periodic_state
from .measure import EffortProfile, SupportSet, detect_atoms, support
from .profiles import Grid, PeriodicPiecewise, Piece, ProblemData, build_grid, preset
from .solver import EffortOptimizer, SolveReport, SolverConfig, solve, sweep_eta

__version__ = "0.1.0"

__all__ = [
    "EffortOptimizer", "EffortProfile", "Grid", "HypothesisError", "PeriodicPiecewise",
    "Piece", "ProblemData", "SolveReport", "SolverConfig", "SubThresholdError", "SupportSet",
    "analyze", "build_grid", "certificate", "classify_discontinuities", "closed_form_solution",
    "concentration_function", "cost", "detect_atoms", "eta_bar_threshold", "eta_star",
    "gradient", "h_function", "periodic_state", "preset", "psi_function",
    "pure_atom_threshold", "solve", "support", "sweep_eta",
]
