"""Proportional allocation: bids to shares, utilities and welfare."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

from .valuations import ValuationFunction, validate

INF = math.inf


class GameError(ValueError):
    pass


@dataclass(frozen=True)
class Bidder:
    valuation: ValuationFunction
    budget: float = INF

    def __post_init__(self) -> None:
        if not self.budget > 0:
            raise GameError(f"budget must be positive, got {self.budget!r}")


@dataclass(frozen=True)
class Game:
    bidders: tuple[Bidder, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bidders", tuple(self.bidders))
        if len(self.bidders) < 2:
            raise GameError("a game needs at least two bidders")
        for i, b in enumerate(self.bidders):
            report = validate(b.valuation)
            if not report.ok:
                raise GameError(f"bidder {i}: {'; '.join(report.failures)}")

    @classmethod
    def of(cls, valuations: Sequence[ValuationFunction], budgets: Sequence[float] | None = None) -> "Game":
        budgets = [INF] * len(valuations) if budgets is None else list(budgets)
        return cls(tuple(Bidder(v, c) for v, c in zip(valuations, budgets, strict=True)))

    @property
    def n(self) -> int:
        return len(self.bidders)

    @property
    def valuations(self) -> list[ValuationFunction]:
        return [b.valuation for b in self.bidders]

    @property
    def budgets(self) -> list[float]:
        return [b.budget for b in self.bidders]

    @property
    def budgeted(self) -> bool:
        return any(math.isfinite(c) for c in self.budgets)


@dataclass(frozen=True)
class BidProfile:
    bids: tuple[float, ...]

    def __post_init__(self) -> None:
        bids = tuple(float(b) for b in self.bids)
        object.__setattr__(self, "bids", bids)
        for i, b in enumerate(bids):
            if not (b >= 0 and math.isfinite(b)):
                raise GameError(f"bid {i} must be finite and non-negative, got {b!r}")

    @classmethod
    def for_game(cls, game: Game, bids: Sequence[float], *, slack: float = 1e-12) -> "BidProfile":
        """Build a profile, enforcing every bidder's budget."""
        if len(bids) != game.n:
            raise GameError(f"expected {game.n} bids, got {len(bids)}")
        fixed = []
        for i, (b, c) in enumerate(zip(bids, game.budgets)):
            if b > c * (1 + slack):
                raise GameError(f"bid {i} = {b!r} exceeds budget {c!r}")
            fixed.append(min(b, c))
        return cls(tuple(fixed))

    def __len__(self) -> int:
        return len(self.bids)

    @property
    def total(self) -> float:
        return math.fsum(self.bids)

    def others(self, i: int) -> float:
        """Sum of all bids except bidder ``i``'s."""
        return math.fsum(b for j, b in enumerate(self.bids) if j != i)


@dataclass(frozen=True)
class Allocation:
    shares: tuple[float, ...]
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.shares)


@dataclass(frozen=True)
class CorrelatedBidDistribution:
    support: tuple[tuple[BidProfile, float], ...]

    def __post_init__(self) -> None:
        support = tuple((p if isinstance(p, BidProfile) else BidProfile(tuple(p)), float(q))
                        for p, q in self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise GameError("empty support")
        if any(q < 0 for _, q in support):
            raise GameError("negative probability")
        total = math.fsum(q for _, q in support)
        if abs(total - 1.0) > 1e-12:
            raise GameError(f"probabilities sum to {total!r}, not 1")
        sizes = {len(p) for p, _ in support}
        if len(sizes) != 1:
            raise GameError("profiles of different sizes in support")

    @classmethod
    def point_mass(cls, profile: BidProfile) -> "CorrelatedBidDistribution":
        return cls(((profile, 1.0),))

    def check_feasible(self, game: Game) -> None:
        for profile, _ in self.support:
            BidProfile.for_game(game, profile.bids)


def share(bid: float, others: float) -> float:
    """Share of a bidder bidding ``bid`` against ``others``; zero-sum bids give 0."""
    total = bid + others
    return bid / total if total > 0 else 0.0


def allocate(profile: BidProfile) -> Allocation:
    total = profile.total
    if total <= 0:
        return Allocation(tuple(0.0 for _ in profile.bids), degenerate=True)
    return Allocation(tuple(b / total for b in profile.bids))


def _check_size(game: Game, n: int) -> None:
    if n != game.n:
        raise GameError(f"size mismatch: game has {game.n} bidders, got {n}")


def utility_profile(game: Game, profile: BidProfile) -> list[float]:
    _check_size(game, len(profile))
    alloc = allocate(profile)
    return [v(d) - b for v, d, b in zip(game.valuations, alloc.shares, profile.bids)]


def social_welfare(game: Game, alloc: Allocation) -> float:
    _check_size(game, len(alloc))
    return math.fsum(v(d) for v, d in zip(game.valuations, alloc.shares))


def _expected_values(game: Game, dist: CorrelatedBidDistribution) -> list[float]:
    values = [0.0] * game.n
    for profile, q in dist.support:
        _check_size(game, len(profile))
        for i, (v, d) in enumerate(zip(game.valuations, allocate(profile).shares)):
            values[i] += q * v(d)
    return values


def effective_welfare(game: Game, alloc: Union[Allocation, CorrelatedBidDistribution]) -> float:
    """Budget-capped welfare; for a bid distribution the cap applies to expected values."""
    if isinstance(alloc, CorrelatedBidDistribution):
        values = _expected_values(game, alloc)
    else:
        _check_size(game, len(alloc))
        values = [v(d) for v, d in zip(game.valuations, alloc.shares)]
    return math.fsum(min(val, c) for val, c in zip(values, game.budgets))


def expected_social_welfare(game: Game, dist: CorrelatedBidDistribution) -> float:
    return math.fsum(_expected_values(game, dist))


def expected_utilities(game: Game, dist: CorrelatedBidDistribution) -> list[float]:
    out = [0.0] * game.n
    for profile, q in dist.support:
        for i, u in enumerate(utility_profile(game, profile)):
            out[i] += q * u
    return out
