"""Instance-level checks of the welfare guarantees and the tight constructions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

from .bayesian import (
    REPORTED_POINT,
    ROUNDING_CAVEAT,
    BayesianGame,
    BayesNashResult,
    appendix_c_constraints,
    appendix_c_objective,
    appendix_c_program,
    bayesian_welfare,
)
from .mechanism import INF, Allocation, BidProfile, Game, GameError, social_welfare, utility_profile
from .solvers import EquilibriumResult, SolverConfig, optimal_effective_welfare, optimal_welfare, pure_nash
from .valuations import Linear, ValuationFunction

SLACK = 1e-9
THRESHOLD_TOL = 1e-6

COARSE_CORRELATED_BOUND = 0.5
PURE_NASH_BOUND = 0.75
BUDGETED_BOUND = (7 - math.sqrt(17)) / 8  # 0.35961...


@dataclass(frozen=True)
class DiscreteDistribution:
    support: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        support = tuple((float(x), float(p)) for x, p in self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise ValueError("empty support")
        if any(x < 0 for x, _ in support) or any(p < 0 for _, p in support):
            raise ValueError("values and probabilities must be non-negative")
        total = math.fsum(p for _, p in support)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}")

    @classmethod
    def constant(cls, value: float) -> "DiscreteDistribution":
        return cls(((value, 1.0),))

    @property
    def mean(self) -> float:
        return math.fsum(x * p for x, p in self.support)


@dataclass(frozen=True)
class SmoothnessParams:
    lam: float
    mu: float

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @property
    def deviation_factor(self) -> float:
        """Fraction of ``v(z)`` guaranteed by the scaled deviation bid."""
        return (3 * self.mu - 1) / (4 * self.mu)


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def deviation_factor(mu: float) -> float:
    return (3 * mu - 1) / (4 * mu)


def quadratic_slack(a: float, mu: float) -> float:
    """``1 - a + mu/(mu+1) a^2 - (3mu-1)/(4mu)``; non-negative for every ``a``."""
    return 1 - a + mu / (mu + 1) * a * a - deviation_factor(mu)


def lemma1_check(v: ValuationFunction, z: float, mu: float, gamma: DiscreteDistribution) -> InequalityCheck:
    """Expected utility of bidding ``mu * z * E[gamma]`` against the random total ``gamma``."""
    if not 0 <= z <= 1:
        raise ValueError("z must lie in [0, 1]")
    if not mu > 0:
        raise ValueError("mu must be positive")
    mean = gamma.mean
    if z > 0 and mean <= 0:
        raise ValueError("E[gamma] must be positive: the deviation bid would be 0 against 0")
    y = mu * z * mean
    lhs = math.fsum(p * v(y / (y + s) if y + s > 0 else 0.0) for s, p in gamma.support) - y
    rhs = deviation_factor(mu) * v(z) - y
    return InequalityCheck(lhs, rhs, lhs >= rhs - SLACK)


def smoothness_certificate(game: Game, eq_profile: BidProfile, opt_alloc: Allocation,
                           params: SmoothnessParams) -> InequalityCheck:
    if len(eq_profile) != game.n or len(opt_alloc) != game.n:
        raise GameError("size mismatch")
    lhs = math.fsum(utility_profile(game, eq_profile))
    total = eq_profile.total
    charge = math.fsum(x * (total - b) for x, b in zip(opt_alloc.shares, eq_profile.bids))
    rhs = params.lam * social_welfare(game, opt_alloc) - params.mu * charge
    return InequalityCheck(lhs, rhs, lhs >= rhs - SLACK)


# -- price-of-anarchy reports ----------------------------------------------


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


@dataclass
class PoAReport:
    sw: float
    sw_star: float
    ew: float
    ew_star: float
    ratio_sw: float
    ratio_ew: float
    ratio_sw_ew: float
    checks: dict[str, bool] = field(default_factory=dict)
    degenerate: bool = False
    budgeted: bool = False

    @property
    def violations(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]

    def as_record(self) -> dict:
        return {
            "sw": self.sw,
            "sw_star": self.sw_star,
            "ew": self.ew,
            "ew_star": self.ew_star,
            "ratio_sw": self.ratio_sw,
            "ratio_ew": self.ratio_ew,
            "ratio_sw_ew": self.ratio_sw_ew,
            "degenerate": self.degenerate,
            "violations": ";".join(self.violations),
        }


def _threshold_checks(report: PoAReport, *, pure_full_information: bool) -> None:
    tol = THRESHOLD_TOL
    if not report.budgeted:
        report.checks["ratio_sw>=0.5"] = report.ratio_sw >= COARSE_CORRELATED_BOUND - tol
        if pure_full_information:
            report.checks["ratio_sw>=0.75"] = report.ratio_sw >= PURE_NASH_BOUND - tol
    else:
        report.checks["ratio_ew>=0.3596"] = report.ratio_ew >= BUDGETED_BOUND - tol
        report.checks["sw/ew*>=0.5"] = report.ratio_sw_ew >= COARSE_CORRELATED_BOUND - tol


def poa_report(game: Union[Game, BayesianGame],
               result: Union[EquilibriumResult, BayesNashResult]) -> PoAReport:
    """Welfare quantities at an equilibrium and their ratios to the optima."""
    if not result.converged:
        raise ValueError("poa_report needs a converged equilibrium")
    if isinstance(game, BayesianGame):
        if not isinstance(result, BayesNashResult):
            raise TypeError("a Bayesian game needs a BayesNashResult")
        w = bayesian_welfare(game, result.profile)
        sw, ew, sw_star, ew_star = w.expected_sw, w.expected_ew, w.sw_star, w.ew_star
        budgeted = any(math.isfinite(t.budget) for ts in game.types for t in ts)
        degenerate = result.degenerate
        pure_full = False
    else:
        sw, ew = result.sw, result.ew
        sw_star = optimal_welfare(game)[1]
        ew_star = optimal_effective_welfare(game)[1]
        budgeted = game.budgeted
        degenerate = result.allocation.degenerate
        pure_full = True
    report = PoAReport(
        sw=sw, sw_star=sw_star, ew=ew, ew_star=ew_star,
        ratio_sw=_ratio(sw, sw_star), ratio_ew=_ratio(ew, ew_star), ratio_sw_ew=_ratio(sw, ew_star),
        degenerate=degenerate, budgeted=budgeted,
    )
    _threshold_checks(report, pure_full_information=pure_full)
    return report


# -- named constructions ---------------------------------------------------


def lemma3_game(n: int) -> Game:
    """Bidder 1 values the resource linearly with slope 1, the rest with slope (n-1)/(2n-3)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    slope = (n - 1) / (2 * n - 3)
    return Game.of([Linear(1.0)] + [Linear(slope)] * (n - 1))


def budget_game(alpha: float) -> Game:
    """Two linear bidders; the steeper one has a budget equal to its equilibrium bid."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return Game.of([Linear(1.0), Linear(alpha)], [alpha / (1 + alpha) ** 2, INF])


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    expected: float
    tolerance: float
    kind: str = "abs"  # "abs": |value - expected| <= tol; "le": value <= expected + tol; "ge"

    @property
    def deviation(self) -> float:
        return self.value - self.expected

    @property
    def passed(self) -> bool:
        if self.kind == "le":
            return self.value <= self.expected + self.tolerance
        if self.kind == "ge":
            return self.value >= self.expected - self.tolerance
        return abs(self.value - self.expected) <= self.tolerance


@dataclass
class ReplicationReport:
    case: str
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    values: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, value: float, expected: float, tolerance: float, kind: str = "abs") -> None:
        self.checks.append(Check(name, float(value), float(expected), tolerance, kind))

    def rows(self) -> list[dict]:
        return [
            {"case": self.case, "check": c.name, "value": c.value, "expected": c.expected,
             "deviation": c.deviation, "tolerance": c.tolerance, "passed": c.passed}
            for c in self.checks
        ]


def replicate_lemma3(n: int, config: SolverConfig | None = None) -> ReplicationReport:
    game = lemma3_game(n)
    result = pure_nash(game, config)
    alloc, sw_star = optimal_welfare(game)
    bids = result.bids.bids
    u = utility_profile(game, result.bids)
    report = ReplicationReport(f"lemma3(n={n})")
    report.add("b_1", bids[0], 0.25, 1e-6)
    report.add("max |b_i - 1/(4(n-1))|", max(abs(b - 1 / (4 * (n - 1))) for b in bids[1:]), 0.0, 1e-6)
    report.add("epsilon", result.epsilon, 0.0, 1e-8, "le")
    report.add("d_1", result.allocation.shares[0], 0.5, 1e-6)
    report.add("u_1", u[0], 0.25, 1e-6)
    report.add("sum_{i>1} u_i", math.fsum(u[1:]), 1 / (4 * (2 * n - 3)), 1e-6)
    report.add("SW*", sw_star, 1.0, 1e-12)
    ratio = result.sw / sw_star
    report.add("SW/SW*", ratio, 0.5 + (n - 1) / (2 * (2 * n - 3)), 1e-6)
    cert = smoothness_certificate(game, result.bids, alloc, SmoothnessParams(0.5, 1.0))
    report.add("smoothness(1/2, 1) slack", cert.slack, 0.0, SLACK, "ge")
    report.values.update(ratio=ratio, sw=result.sw, sw_star=sw_star, converged=float(result.converged))
    return report


def replicate_budget(alpha: float, config: SolverConfig | None = None) -> ReplicationReport:
    game = budget_game(alpha)
    result = pure_nash(game, config)
    b1, b2 = result.bids.bids
    total = b1 + b2
    ew_star = optimal_effective_welfare(game)[1]
    a = alpha
    report = ReplicationReport(f"budget(alpha={alpha:g})")
    report.add("b_1", b1, a / (1 + a) ** 2, 1e-6)
    report.add("b_2", b2, a * a / (1 + a) ** 2, 1e-6)
    report.add("bidder 1 marginal utility", b2 / total**2 - 1, 0.0, 1e-8)
    report.add("bidder 2 marginal utility", a * b1 / total**2 - 1, 0.0, 1e-8)
    report.add("epsilon", result.epsilon, 0.0, 1e-8, "le")
    ew_closed = (a + a**2 + a**3) / (1 + a) ** 2
    ew_star_closed = (2 * a + a**2 + a**3) / (1 + a) ** 2
    report.add("EW", result.ew, ew_closed, 1e-9)
    report.add("EW*", ew_star, ew_star_closed, 1e-9)
    ratio = result.ew / ew_star
    report.add("EW/EW*", ratio, (1 + a + a * a) / (2 + a + a * a), 1e-9)
    report.values.update(ratio=ratio, ew=result.ew, ew_star=ew_star)
    return report


def replicate_appendix_c(grid_resolution: int = 10, refine_iterations: int = 200) -> ReplicationReport:
    report = ReplicationReport("appendix-c")
    at_reported = float(appendix_c_objective(*REPORTED_POINT.astuple()))
    s1, s2 = appendix_c_constraints(*REPORTED_POINT.astuple())
    report.add("objective at reported point", at_reported, 0.7154, 1e-3)
    report.add("constraint 1 slack at reported point", s1, 0.0, 2e-4, "ge")
    report.add("constraint 2 slack at reported point", s2, 0.0, 2e-4, "ge")
    params, best = appendix_c_program(grid_resolution, refine_iterations)
    t1, t2 = appendix_c_constraints(*params.astuple())
    report.add("optimised objective", best, 0.7160, 0.0, "le")
    report.add("optimised constraint 1 slack", t1, 0.0, SLACK, "ge")
    report.add("optimised constraint 2 slack", t2, 0.0, SLACK, "ge")
    report.values.update(objective=best, **{k: getattr(params, k) for k in ("alpha", "gamma", "delta", "p1", "p2")})
    report.notes.append(ROUNDING_CAVEAT)
    return report


def replicate(case: str, **kwargs) -> ReplicationReport:
    """Run one named construction: ``lemma3`` (n), ``budget`` (alpha) or ``appendix-c``."""
    key = case.replace("_", "-").lower()
    if key == "lemma3":
        return replicate_lemma3(kwargs.get("n", 100), kwargs.get("config"))
    if key in ("budget", "budget-example"):
        return replicate_budget(kwargs.get("alpha", 0.5), kwargs.get("config"))
    if key == "appendix-c":
        return replicate_appendix_c(kwargs.get("grid_resolution", 10), kwargs.get("refine_iterations", 200))
    raise ValueError(f"unknown case {case!r}")


def lemma3_ratios(ns: Sequence[int]) -> list[float]:
    return [replicate_lemma3(n).values["ratio"] for n in ns]
