"""Joint RB / power / placement optimisation for one slot."""
from .assignment import maxmin_rb_allocation, round_allocation, round_robin, solve_rb_allocation
from .bcd import FeasibilityResult, feasibility_phase, initial_allocation, successive_maximization
from .position import position_gradient, solve_position
from .power import maxmin_power, solve_power
from .problem import (
    Allocation,
    ProblemInstance,
    Rect,
    SolveOutcome,
    SolverConfig,
    objective,
    rate_matrix,
    required_rate,
    user_rates,
)

__all__ = [
    "Allocation", "FeasibilityResult", "ProblemInstance", "Rect", "SolveOutcome", "SolverConfig",
    "feasibility_phase", "initial_allocation", "maxmin_power", "maxmin_rb_allocation", "objective",
    "position_gradient", "rate_matrix", "required_rate", "round_allocation", "round_robin",
    "solve_position", "solve_power", "solve_rb_allocation", "successive_maximization", "user_rates",
]
