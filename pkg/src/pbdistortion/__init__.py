"""Bargaining mechanisms for participatory budgeting and their distortion."""

from .budget_core import Budget, BudgetError, VoteProfile, cost, overlap_utility, social_cost
from .distortion_engine import (DistortionReport, exact_distortion, gen_lower_bound_instance,
                                mc_distortion, nash_lb_closed_form, optimal_budget)
from .incremental_space import AllocTable, build_X, build_Z, monotonicity_check, project_X
from .interactions import InteractionSpec, efficiency, interaction_utility, repair, respects_interactions
from .mechanisms import (FillStrategy, build_Z_tilde, median_scheme, nash_bargain, nash_rand,
                         random_diarchy, random_dictator, random_referee, sequential_deliberation)

__version__ = "0.1.0"

__all__ = [
    "AllocTable", "Budget", "BudgetError", "DistortionReport", "FillStrategy", "InteractionSpec",
    "VoteProfile", "build_X", "build_Z", "build_Z_tilde", "cost", "efficiency", "exact_distortion",
    "gen_lower_bound_instance", "interaction_utility", "mc_distortion", "median_scheme",
    "monotonicity_check", "nash_bargain", "nash_lb_closed_form", "nash_rand", "optimal_budget",
    "overlap_utility", "project_X", "random_diarchy", "random_dictator", "random_referee", "repair",
    "respects_interactions", "sequential_deliberation", "social_cost",
]
