"""Finite-type Bayesian proportional allocation games."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .mechanism import INF, Bidder, BidProfile, Game, GameError, allocate
from .solvers import (
    EPSILON_FLOOR,
    SolverConfig,
    StepControl,
    best_deviation,
    deviation_payoff,
    optimal_effective_welfare,
    optimal_welfare,
)
from .valuations import Linear, PiecewiseLinear, Power, ValuationFunction, validate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BidderType:
    valuation: ValuationFunction
    budget: float = INF
    prob: float = 1.0


@dataclass(frozen=True)
class BayesianGame:
    """Independent finite type distributions, one per bidder."""

    types: tuple[tuple[BidderType, ...], ...]

    def __post_init__(self) -> None:
        types = tuple(tuple(ts) for ts in self.types)
        object.__setattr__(self, "types", types)
        if len(types) < 2:
            raise GameError("a game needs at least two bidders")
        for i, ts in enumerate(types):
            if not ts:
                raise GameError(f"bidder {i} has no types")
            for t in ts:
                if not 0 < t.prob <= 1:
                    raise GameError(f"bidder {i}: type probability {t.prob!r} outside (0, 1]")
                if not t.budget > 0:
                    raise GameError(f"bidder {i}: budget must be positive")
                report = validate(t.valuation)
                if not report.ok:
                    raise GameError(f"bidder {i}: {'; '.join(report.failures)}")
            total = math.fsum(t.prob for t in ts)
            if abs(total - 1.0) > 1e-12:
                raise GameError(f"bidder {i}: type probabilities sum to {total!r}")

    @classmethod
    def from_game(cls, game: Game) -> "BayesianGame":
        return cls(tuple((BidderType(b.valuation, b.budget, 1.0),) for b in game.bidders))

    @property
    def n(self) -> int:
        return len(self.types)

    def type_profiles(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """All joint type draws with their probabilities."""
        for combo in itertools.product(*(range(len(ts)) for ts in self.types)):
            p = math.prod(self.types[i][t].prob for i, t in enumerate(combo))
            yield combo, p

    def realize(self, combo: Sequence[int]) -> list[Bidder]:
        return [Bidder(self.types[i][t].valuation, self.types[i][t].budget) for i, t in enumerate(combo)]


StrategyProfile = tuple[tuple[float, ...], ...]


def check_profile(bgame: BayesianGame, profile: Sequence[Sequence[float]]) -> StrategyProfile:
    if len(profile) != bgame.n:
        raise GameError(f"size mismatch: {bgame.n} bidders, profile has {len(profile)}")
    out = []
    for i, (ts, bids) in enumerate(zip(bgame.types, profile)):
        if len(bids) != len(ts):
            raise GameError(f"bidder {i}: {len(ts)} types but {len(bids)} bids")
        for t, b in zip(ts, bids):
            if not 0 <= b <= t.budget * (1 + 1e-12):
                raise GameError(f"bidder {i}: bid {b!r} outside [0, {t.budget!r}]")
        out.append(tuple(min(float(b), t.budget) for t, b in zip(ts, bids)))
    return tuple(out)


def opponent_totals(bgame: BayesianGame, profile: StrategyProfile, bidder: int) -> list[tuple[float, float]]:
    """Distribution of the other bidders' total bid under independent types."""
    others = [j for j in range(bgame.n) if j != bidder]
    dist = []
    for combo in itertools.product(*(range(len(bgame.types[j])) for j in others)):
        p = math.prod(bgame.types[j][t].prob for j, t in zip(others, combo))
        s = math.fsum(profile[j][t] for j, t in zip(others, combo))
        dist.append((s, p))
    return dist


def expected_utility(bgame: BayesianGame, bidder: int, type_index: int, bid: float,
                     profile: Sequence[Sequence[float]]) -> float:
    if not 0 <= bidder < bgame.n:
        raise IndexError(f"bidder {bidder} out of range")
    if not 0 <= type_index < len(bgame.types[bidder]):
        raise IndexError(f"type {type_index} out of range for bidder {bidder}")
    t = bgame.types[bidder][type_index]
    if not 0 <= bid <= t.budget:
        raise GameError(f"bid {bid!r} infeasible for budget {t.budget!r}")
    return deviation_payoff(t.valuation, opponent_totals(bgame, profile, bidder), bid)


@dataclass(frozen=True)
class BayesNashResult:
    profile: StrategyProfile
    epsilon: float
    iterations: int
    converged: bool
    gains: tuple[tuple[float, ...], ...] = ()
    degenerate: bool = False


def type_gains(bgame: BayesianGame, profile: StrategyProfile) -> tuple[tuple[float, ...], bool]:
    """Per-type improvement from the best deterministic deviation."""
    gains = []
    degenerate = False
    for i, ts in enumerate(bgame.types):
        opp = opponent_totals(bgame, profile, i)
        row = []
        for t, b in zip(ts, profile[i]):
            br = best_deviation(t.valuation, t.budget, opp)
            degenerate |= br.degenerate
            row.append(br.utility - deviation_payoff(t.valuation, opp, b))
        gains.append(tuple(row))
    return tuple(gains), degenerate


def verify_bayes_nash(bgame: BayesianGame, profile: Sequence[Sequence[float]]) -> float:
    gains, _ = type_gains(bgame, check_profile(bgame, profile))
    eps = max(max(row) for row in gains)
    return 0.0 if eps < EPSILON_FLOOR else eps


def pure_bayes_nash(bgame: BayesianGame, config: SolverConfig | None = None) -> BayesNashResult:
    """Damped synchronous best-response iteration over all (bidder, type) pairs.

    Every type best-responds to the opponents' bid-total distribution from
    the previous round. The step size is halved when the largest bid movement
    stops improving, which keeps the map contracting for larger bidder counts.
    """
    config = config or SolverConfig()
    n = bgame.n
    bids = [[min(1.0 / (2 * n), t.budget) for t in ts] for ts in bgame.types]
    step = StepControl(config.damping)
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        frozen = tuple(tuple(row) for row in bids)
        target = []
        for i, ts in enumerate(bgame.types):
            opp = opponent_totals(bgame, frozen, i)
            target.append([best_deviation(t.valuation, t.budget, opp).bid for t in ts])
        residual = max(abs(a - b) for ra, rb in zip(target, bids) for a, b in zip(ra, rb))
        if residual < config.bid_tolerance:
            bids = target
            converged = True
            break
        damping = step.update(residual)
        bids = [[(1 - damping) * b + damping * a for a, b in zip(ra, rb)] for ra, rb in zip(target, bids)]
    profile = check_profile(bgame, bids)
    gains, degenerate = type_gains(bgame, profile)
    eps = max(0.0, max(max(row) for row in gains))
    if eps < EPSILON_FLOOR:
        eps = 0.0
    if not converged:
        log.warning("pure_bayes_nash did not converge after %d iterations (eps=%.3g)", it, eps)
    return BayesNashResult(profile, eps, it, converged, gains, degenerate)


@dataclass(frozen=True)
class BayesianWelfare:
    expected_sw: float
    expected_ew: float
    sw_star: float
    ew_star: float


def expected_social_welfare(bgame: BayesianGame, profile: StrategyProfile) -> float:
    total = []
    for combo, p in bgame.type_profiles():
        bids = BidProfile(tuple(profile[i][t] for i, t in enumerate(combo)))
        shares = allocate(bids).shares
        total.append(p * math.fsum(bgame.types[i][t].valuation(d) for (i, t), d in zip(enumerate(combo), shares)))
    return math.fsum(total)


def expected_effective_welfare(bgame: BayesianGame, profile: StrategyProfile) -> float:
    """Sum over bidders of E_own[ min(E_others[v(d)], c) ]."""
    # inner[i][t] accumulates P(others) * v_{i,t}(d_i) over the others' draws
    inner = [[0.0] * len(ts) for ts in bgame.types]
    for combo, p in bgame.type_profiles():
        bids = BidProfile(tuple(profile[i][t] for i, t in enumerate(combo)))
        shares = allocate(bids).shares
        for i, t in enumerate(combo):
            own = bgame.types[i][t]
            inner[i][t] += p / own.prob * own.valuation(shares[i])
    return math.fsum(
        t.prob * min(inner[i][k], t.budget)
        for i, ts in enumerate(bgame.types)
        for k, t in enumerate(ts)
    )


def expected_optimal_welfare(bgame: BayesianGame) -> float:
    return math.fsum(p * optimal_welfare(bgame.realize(combo))[1] for combo, p in bgame.type_profiles())


def _cvx_value(v: ValuationFunction, x):
    import cvxpy as cp

    if isinstance(v, Linear):
        return v.slope * x
    if isinstance(v, Power):
        return v.coef * x if v.exp == 1.0 else v.coef * cp.power(x, v.exp)
    if isinstance(v, PiecewiseLinear):
        # a concave piecewise-linear function is the minimum of its segment lines
        lines = [v0 + s * (x - x0) for (x0, v0), s in zip(v.knots, v.slopes)]
        return lines[0] if len(lines) == 1 else cp.minimum(*lines)
    raise TypeError(type(v).__name__)


def optimal_bayesian_effective_welfare(bgame: BayesianGame) -> float:
    """Maximum of the interim-capped effective welfare over allocation rules.

    The cap sits between the expectation over the bidder's own type and the
    expectation over the others', so it couples type profiles and the
    problem does not decompose into per-profile water-filling. It is a
    concave program, solved with cvxpy.
    """
    if all(math.isinf(t.budget) for ts in bgame.types for t in ts):
        return expected_optimal_welfare(bgame)
    if all(len(ts) == 1 for ts in bgame.types):
        return optimal_effective_welfare(bgame.realize([0] * bgame.n))[1]

    import cvxpy as cp

    profiles = list(bgame.type_profiles())
    x = cp.Variable((len(profiles), bgame.n), nonneg=True)
    constraints = [cp.sum(x, axis=1) <= 1]
    objective = []
    for i, ts in enumerate(bgame.types):
        for k, t in enumerate(ts):
            terms = [p / t.prob * _cvx_value(t.valuation, x[row, i])
                     for row, (combo, p) in enumerate(profiles) if combo[i] == k]
            w = cp.Variable()
            constraints.append(w <= cp.sum(cp.hstack(terms)))
            if math.isfinite(t.budget):
                constraints.append(w <= t.budget)
            objective.append(t.prob * w)
    problem = cp.Problem(cp.Maximize(cp.sum(cp.hstack(objective))), constraints)
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"effective welfare program ended with status {problem.status}")
    return float(problem.value)


def bayesian_welfare(bgame: BayesianGame, profile: Sequence[Sequence[float]]) -> BayesianWelfare:
    profile = check_profile(bgame, profile)
    return BayesianWelfare(
        expected_sw=expected_social_welfare(bgame, profile),
        expected_ew=expected_effective_welfare(bgame, profile),
        sw_star=expected_optimal_welfare(bgame),
        ew_star=optimal_bayesian_effective_welfare(bgame),
    )


# -- the two-bidder coarse-correlated construction --------------------------


@dataclass(frozen=True)
class AppendixCParams:
    """High-type slope ``alpha`` of bidder 2, bids ``gamma``/``delta`` of the
    high types, and high-type probabilities ``p1``/``p2``."""

    alpha: float
    gamma: float
    delta: float
    p1: float
    p2: float

    def __post_init__(self) -> None:
        if self.gamma < 0 or self.delta < 0:
            raise ValueError("bids must be non-negative")
        for name in ("alpha", "p1", "p2"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    def astuple(self) -> tuple[float, float, float, float, float]:
        return (self.alpha, self.gamma, self.delta, self.p1, self.p2)


REPORTED_POINT = AppendixCParams(alpha=0.2913, gamma=0.1071, delta=0.1510, p1=0.6682, p2=0.7616)

ROUNDING_CAVEAT = (
    "negligible bids and valuations are rounded to zero; the program bounds the "
    "rounded construction, not the exact game"
)


def appendix_c_objective(alpha, gamma, delta, p1, p2):
    """Welfare ratio of the correlated construction (works on numpy arrays)."""
    split = (gamma + alpha * delta) / (gamma + delta)
    num = p1 * p2 * split + p1 * (1 - p2) + alpha * (1 - p1) * p2
    return num / (p1 + alpha * (1 - p1) * p2)


def appendix_c_constraints(alpha, gamma, delta, p1, p2):
    """Slacks of the two no-deviation constraints; feasible iff both are >= 0.

    Each right-hand side is the best deviation payoff ``(sqrt(a) - sqrt(b))**2``.
    """
    s1 = p2 * gamma / (gamma + delta) - p2 * gamma - (np.sqrt(p2) - np.sqrt(delta)) ** 2
    s2 = alpha * p1 * delta / (gamma + delta) - p1 * delta - (np.sqrt(alpha * p1) - np.sqrt(gamma)) ** 2
    return s1, s2


def _slack(alpha, gamma, delta, p1, p2):
    s1, s2 = appendix_c_constraints(alpha, gamma, delta, p1, p2)
    return np.minimum(s1, s2)


_DELTA_GRID = np.linspace(0.0, 1.0, 1025)[1:]
_GAMMA_GRID = np.geomspace(1e-4, 1.0, 257)


def _largest_feasible_delta(alpha, gammas, p1, p2):
    """Per gamma, the largest delta in (0, 1] passing both constraints (nan if none)."""
    ok = _slack(alpha, gammas[:, None], _DELTA_GRID[None, :], p1, p2) >= 0
    has = ok.any(axis=1)
    last = ok.shape[1] - 1 - np.argmax(ok[:, ::-1], axis=1)
    lo = _DELTA_GRID[last]
    hi = np.where(last + 1 < len(_DELTA_GRID), _DELTA_GRID[np.minimum(last + 1, len(_DELTA_GRID) - 1)], 1.0)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        good = _slack(alpha, gammas, mid, p1, p2) >= 0
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid)
    return np.where(has, lo, np.nan)


def _best_bids(alpha: float, p1: float, p2: float, zoom: int = 4) -> tuple[float, float] | None:
    """Feasible (gamma, delta) with the largest ratio delta/gamma.

    The objective depends on the bids only through delta/gamma and falls as
    that ratio grows, so the bid pair is settled by this inner search.
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        gammas = _GAMMA_GRID
        deltas = _largest_feasible_delta(alpha, gammas, p1, p2)
        if np.all(np.isnan(deltas)):
            return None
        for _ in range(zoom):
            k = int(np.nanargmax(deltas / gammas))
            lo, hi = gammas[max(k - 1, 0)], gammas[min(k + 1, len(gammas) - 1)]
            finer = np.linspace(lo, hi, 65)
            finer_d = _largest_feasible_delta(alpha, finer, p1, p2)
            if np.all(np.isnan(finer_d)):
                break
            gammas, deltas = finer, finer_d
        k = int(np.nanargmax(deltas / gammas))
    return float(gammas[k]), float(deltas[k])


def _reduced(z: np.ndarray) -> tuple[float, AppendixCParams | None]:
    alpha, p1, p2 = (float(c) for c in z)
    bids = _best_bids(alpha, p1, p2)
    if bids is None:
        return math.inf, None
    params = AppendixCParams(alpha, bids[0], bids[1], p1, p2)
    return float(appendix_c_objective(*params.astuple())), params


def appendix_c_program(grid_resolution: int = 10, refine_iterations: int = 200) -> tuple[AppendixCParams, float]:
    """Minimise the welfare ratio of the construction over feasible parameters.

    A grid over (alpha, p1, p2) is searched first; for each grid point the
    bids come from a feasibility-filtered (gamma, delta) grid with zoomed
    refinement. The best point is then polished by coordinate steps on
    (alpha, p1, p2) with a halving step size.
    """
    if grid_resolution < 10:
        raise ValueError("grid_resolution must be at least 10")
    axis = np.linspace(0.0, 1.0, grid_resolution + 1)[1:]
    best_f, best_z, best_params = math.inf, None, None
    for z in itertools.product(axis, axis, axis):
        f, params = _reduced(np.array(z))
        if f < best_f:
            best_f, best_z, best_params = f, np.array(z), params
    if best_params is None:
        raise RuntimeError("no feasible grid point")

    step = 0.5 / grid_resolution
    directions = [s * np.eye(3)[k] for k in range(3) for s in (1.0, -1.0)]
    for _ in range(refine_iterations):
        if step < 1e-7:
            break
        moved = False
        for d in directions:
            trial = np.clip(best_z + step * d, 0.0, 1.0)
            f, params = _reduced(trial)
            if f < best_f - 1e-14:
                best_f, best_z, best_params, moved = f, trial, params, True
        if not moved:
            step *= 0.5
    return best_params, best_f
