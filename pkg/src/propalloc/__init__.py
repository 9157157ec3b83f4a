"""Proportional allocation games: equilibria, welfare benchmarks and bound checks."""

from .mechanism import (
    Allocation,
    Bidder,
    BidProfile,
    CorrelatedBidDistribution,
    Game,
    GameError,
    allocate,
    effective_welfare,
    social_welfare,
    utility_profile,
)
from .solvers import (
    EquilibriumResult,
    SolverConfig,
    best_response,
    optimal_effective_welfare,
    optimal_welfare,
    pure_nash,
    verify_cce,
    verify_epsilon_nash,
)
from .valuations import Linear, PiecewiseLinear, Power, evaluate, right_derivative, validate

__version__ = "0.1.0"
