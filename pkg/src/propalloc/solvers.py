"""Best responses, pure Nash equilibria and welfare-optimal allocations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, Union

from .mechanism import (
    INF,
    Allocation,
    Bidder,
    BidProfile,
    CorrelatedBidDistribution,
    Game,
    GameError,
    allocate,
    effective_welfare,
    expected_utilities,
    share,
    social_welfare,
    utility_profile,
)
from .valuations import Linear, PiecewiseLinear, Power, ValuationFunction

log = logging.getLogger(__name__)

# Gains below this are solver noise and reported as zero.
EPSILON_FLOOR = 1e-8

OpponentTotals = Sequence[tuple[float, float]]
"""Finite distribution of the opponents' total bid as ``(total, probability)`` pairs."""


@dataclass(frozen=True)
class SolverConfig:
    bid_tolerance: float = 1e-9
    max_iterations: int = 10_000
    damping: float = 0.5
    deviation_grid_size: int = 10_001

    def __post_init__(self) -> None:
        if not self.bid_tolerance > 0:
            raise ValueError("bid_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.deviation_grid_size < 2:
            raise ValueError("deviation_grid_size must be at least 2")


@dataclass(frozen=True)
class EquilibriumResult:
    bids: BidProfile
    allocation: Allocation
    epsilon: float
    iterations: int
    converged: bool
    sw: float
    ew: float
    method: str = "aggregate"

    def as_record(self) -> dict:
        return {
            "bids": list(self.bids.bids),
            "shares": list(self.allocation.shares),
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "converged": self.converged,
            "sw": self.sw,
            "ew": self.ew,
            "method": self.method,
            "degenerate": self.allocation.degenerate,
        }


class BestResponse(NamedTuple):
    bid: float
    utility: float
    degenerate: bool = False


def bisect_slope(slope: Callable[[float], float], lo: float, hi: float, tol: float = 1e-15) -> float:
    """Maximise a concave function on ``[lo, hi]`` given its right derivative.

    The right derivative of a concave function is non-increasing, so the
    maximiser is where it changes sign.
    """
    if hi <= lo or slope(lo) <= 0:
        return lo
    if slope(hi) >= 0:
        return hi
    scale = max(1.0, abs(hi))
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= tol * scale:
            break
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def deviation_payoff(v: ValuationFunction, opponents: OpponentTotals, y: float) -> float:
    """Expected utility of the deterministic bid ``y`` against random opponent totals."""
    return math.fsum(q * v(share(y, s)) for s, q in opponents) - y


def best_deviation(v: ValuationFunction, budget: float, opponents: OpponentTotals,
                   tol: float = 1e-15) -> BestResponse:
    """Supremum of :func:`deviation_payoff` over bids in ``[0, budget]``.

    Opponent totals equal to zero make the payoff jump at ``y = 0`` (any
    positive bid takes the whole resource). The supremum is then not
    attained at zero, and the result carries ``degenerate=True``.
    """
    positive = [(s, q) for s, q in opponents if s > 0 and q > 0]
    p_zero = math.fsum(q for s, q in opponents if s <= 0)
    top = v(1.0)
    hi = min(budget, top)
    if hi <= 0:
        return BestResponse(0.0, 0.0, False)

    def slope(y: float) -> float:
        total = 0.0
        for s, q in positive:
            t = y + s
            total += q * v.right_derivative(min(y / t, 1.0)) * s / (t * t)
        return total - 1.0

    y = bisect_slope(slope, 0.0, hi, tol)
    value = math.fsum(q * v(share(y, s)) for s, q in positive) - y
    if p_zero > 0:
        value += p_zero * top
        return BestResponse(y, value, y == 0.0)
    return BestResponse(y, value, False)


def best_response(v: ValuationFunction, budget: float, opp_total: float, tol: float = 1e-15) -> BestResponse:
    """Utility-maximising bid against a fixed total of the other bids.

    With ``opp_total == 0`` no maximiser exists; the bid is 0 and the
    result is flagged degenerate.
    """
    if opp_total < 0:
        raise ValueError("opp_total must be non-negative")
    if opp_total == 0:
        return BestResponse(0.0, v(1.0), True)
    return best_deviation(v, budget, [(opp_total, 1.0)], tol)


def _clip_epsilon(eps: float) -> float:
    return 0.0 if eps < EPSILON_FLOOR else eps


def nash_gains(game: Game, profile: BidProfile) -> list[float]:
    """Per-bidder utility improvement available by a unilateral deviation."""
    utilities = utility_profile(game, profile)
    total = profile.total
    gains = []
    for i, bidder in enumerate(game.bidders):
        br = best_response(bidder.valuation, bidder.budget, max(total - profile.bids[i], 0.0))
        gains.append(br.utility - utilities[i])
    return gains


def verify_epsilon_nash(game: Game, profile: BidProfile, config: SolverConfig | None = None) -> float:
    if len(profile) != game.n:
        raise GameError(f"size mismatch: game has {game.n} bidders, got {len(profile)}")
    return _clip_epsilon(max(0.0, *nash_gains(game, profile)))


def verify_cce(game: Game, dist: CorrelatedBidDistribution, config: SolverConfig | None = None) -> float:
    """Largest expected gain from a deterministic unilateral deviation."""
    dist.check_feasible(game)
    current = expected_utilities(game, dist)
    eps = 0.0
    for i, bidder in enumerate(game.bidders):
        opponents = [(profile.others(i), q) for profile, q in dist.support]
        br = best_deviation(bidder.valuation, bidder.budget, opponents)
        eps = max(eps, br.utility - current[i])
    return _clip_epsilon(eps)


# -- pure Nash equilibria ---------------------------------------------------


def _share_at_total(v: ValuationFunction, total: float) -> float:
    """Largest share ``d`` with ``v'(d) * (1 - d) >= total``.

    This is the share a bidder ends up with when best-responding inside a
    profile whose bids sum to ``total``.
    """
    if isinstance(v, Linear) or (isinstance(v, Power) and v.exp == 1.0):
        a = v.slope if isinstance(v, Linear) else v.coef
        return max(0.0, 1.0 - total / a) if a > 0 else 0.0
    if isinstance(v, PiecewiseLinear):
        best = 0.0
        xs = [x for x, _ in v.knots]
        for k, s in enumerate(v.slopes):
            if s > 0 and s * (1.0 - xs[k]) >= total:
                best = max(best, min(xs[k + 1], 1.0 - total / s))
        return best

    def h(d: float) -> float:
        return v.right_derivative(d) * (1.0 - d) - total

    return bisect_slope(h, 0.0, 1.0)


def _bids_at_total(game: Game, total: float) -> list[float]:
    return [min(_share_at_total(b.valuation, total) * total, b.budget) for b in game.bidders]


def _aggregate_nash(game: Game, config: SolverConfig) -> tuple[list[float], int, bool]:
    def excess(total: float) -> float:
        return math.fsum(_bids_at_total(game, total)) / total - 1.0

    hi = max(b.valuation.right_derivative(0.0) for b in game.bidders)
    if not math.isfinite(hi):
        hi = 1.0
        while excess(hi) >= 0 and hi < 1e300:
            hi *= 2.0
    if hi <= 0:
        return [0.0] * game.n, 0, False
    lo = hi
    while excess(lo) < 0:
        lo *= 0.5
        if lo < 1e-300:
            return [0.0] * game.n, 0, False
    if lo == hi:
        lo = hi * 0.5
    iterations = 0
    while hi - lo > 1e-15 * hi and iterations < config.max_iterations:
        iterations += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if excess(mid) >= 0:
            lo = mid
        else:
            hi = mid
    bids = _bids_at_total(game, lo)
    return bids, iterations, True


class StepControl:
    """Damping schedule for best-response iteration.

    The step is halved when the residual has not reached a new minimum for
    ``patience`` rounds; a single uptick is normal for oscillating
    convergence and does not count.
    """

    def __init__(self, damping: float, patience: int = 25, floor: float = 1e-4):
        self.damping = damping
        self.patience = patience
        self.floor = floor
        self._best = math.inf
        self._stale = 0

    def update(self, residual: float) -> float:
        if residual < self._best:
            self._best = residual
            self._stale = 0
        else:
            self._stale += 1
            if self._stale >= self.patience:
                self.damping = max(self.damping * 0.5, self.floor)
                self._best = residual
                self._stale = 0
        return self.damping


def _damped_dynamics(game: Game, config: SolverConfig,
                     start: Sequence[float] | None = None) -> tuple[list[float], int, bool]:
    n = game.n
    bids = list(start) if start is not None else [min(1.0 / (2 * n), b.budget) for b in game.bidders]
    step = StepControl(config.damping)
    for it in range(1, config.max_iterations + 1):
        total = math.fsum(bids)
        target = [best_response(b.valuation, b.budget, max(total - bids[i], 0.0)).bid
                  for i, b in enumerate(game.bidders)]
        residual = max(abs(t - b) for t, b in zip(target, bids))
        if residual < config.bid_tolerance:
            return target, it, True
        damping = step.update(residual)
        bids = [(1 - damping) * b + damping * t for b, t in zip(bids, target)]
    return bids, config.max_iterations, False


def pure_nash(game: Game, config: SolverConfig | None = None, method: str = "aggregate") -> EquilibriumResult:
    """Pure Nash equilibrium of the proportional allocation game.

    ``method="aggregate"`` bisects on the total bid: at a total ``B`` every
    bidder's consistent share solves ``v'(d)(1-d) = B`` (capped by the
    budget), and the equilibrium total is where those bids sum to ``B``.
    ``method="dynamics"`` runs damped synchronous best-response iteration
    from ``b_i = 1/(2n)``; the step is halved when the residual stalls.
    Either way the returned epsilon is certified independently.
    """
    config = config or SolverConfig()
    if method == "aggregate":
        bids, iterations, converged = _aggregate_nash(game, config)
    elif method == "dynamics":
        bids, iterations, converged = _damped_dynamics(game, config)
    else:
        raise ValueError(f"unknown method {method!r}")
    profile = BidProfile.for_game(game, bids)
    alloc = allocate(profile)
    eps = verify_epsilon_nash(game, profile, config)
    if not converged:
        log.warning("pure_nash(%s) did not converge after %d iterations (eps=%.3g)", method, iterations, eps)
    return EquilibriumResult(
        bids=profile,
        allocation=alloc,
        epsilon=eps,
        iterations=iterations,
        converged=converged and not alloc.degenerate,
        sw=social_welfare(game, alloc),
        ew=effective_welfare(game, alloc),
        method=method,
    )


# -- welfare benchmarks ----------------------------------------------------

GameLike = Union[Game, Sequence[Bidder]]


def _bidders(game: GameLike) -> tuple[Bidder, ...]:
    bidders = game.bidders if isinstance(game, Game) else tuple(game)
    if not bidders:
        raise GameError("need at least one bidder")
    return bidders


def _water_fill(demand: Callable[[float], list[float]], tol: float) -> list[float]:
    """Find the marginal value at which total demand meets the unit supply.

    ``demand(lam)`` returns each bidder's largest share whose marginal value
    is at least ``lam``; it is non-increasing in ``lam`` with ``demand(0)``
    summing to at least one.
    """
    lo = 0.0
    hi = 1.0
    while math.fsum(demand(hi)) >= 1.0:
        lo = hi
        hi *= 2.0
        if hi > 1e300:
            break
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(hi, 1e-300) or mid <= lo or mid >= hi:
            break
        if math.fsum(demand(mid)) >= 1.0:
            lo = mid
        else:
            hi = mid
    x_lo, x_hi = demand(lo), demand(hi)
    residual = 1.0 - math.fsum(x_hi)
    gaps = [a - b for a, b in zip(x_lo, x_hi)]
    spread = math.fsum(gaps)
    if spread <= 0 or residual <= 0:
        return x_hi
    # kink ties: split the residual in proportion to each bidder's slack at the kink
    return [b + g * residual / spread for b, g in zip(x_hi, gaps)]


def optimal_welfare(game: GameLike, tol: float = 1e-15) -> tuple[Allocation, float]:
    """Welfare-maximising split of the resource (budgets ignored)."""
    bidders = _bidders(game)
    vals = [b.valuation for b in bidders]

    def demand(lam: float) -> list[float]:
        return [v.max_share_at_slope(lam) for v in vals]

    x = _water_fill(demand, tol)
    return Allocation(tuple(x)), math.fsum(v(xi) for v, xi in zip(vals, x))


def optimal_effective_welfare(game: GameLike, tol: float = 1e-15) -> tuple[Allocation, float]:
    """Maximise the sum of budget-capped values over allocations."""
    bidders = _bidders(game)
    caps = [b.valuation.inverse(b.budget) if math.isfinite(b.budget) else 1.0 for b in bidders]

    def demand(lam: float) -> list[float]:
        if lam <= 0:
            return [1.0] * len(bidders)
        return [min(b.valuation.max_share_at_slope(lam), cap) for b, cap in zip(bidders, caps)]

    x = _water_fill(demand, tol)
    ew = math.fsum(min(b.valuation(xi), b.budget) for b, xi in zip(bidders, x))
    return Allocation(tuple(x)), ew
