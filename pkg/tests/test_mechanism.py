import math

import numpy as np
import pytest

from propalloc.mechanism import (
    INF, Allocation, Bidder, BidProfile, CorrelatedBidDistribution, Game, GameError, allocate,
    effective_welfare, expected_social_welfare, share, social_welfare, utility_profile,
)
from propalloc.valuations import Linear, Power


def lemma3(n):
    return Game.of([Linear(1.0)] + [Linear((n - 1) / (2 * n - 3))] * (n - 1))


def test_allocate_examples():
    assert allocate(BidProfile((0.25, 0.25))).shares == pytest.approx((0.5, 0.5))
    alloc = allocate(BidProfile((1 / 4, 1 / 12, 1 / 12, 1 / 12)))
    assert alloc.shares == pytest.approx((0.5, 1 / 6, 1 / 6, 1 / 6))
    zero = allocate(BidProfile((0.0, 0.0)))
    assert zero.shares == (0.0, 0.0) and zero.degenerate


def test_utility_examples():
    game = Game.of([Linear(1.0), Linear(1.0)])
    assert utility_profile(game, BidProfile((0.25, 0.25))) == pytest.approx([0.25, 0.25])
    assert utility_profile(game, BidProfile((0.0, 0.0))) == [0.0, 0.0]
    for n in (3, 10, 50):
        bids = [0.25] + [1 / (4 * (n - 1))] * (n - 1)
        u = utility_profile(lemma3(n), BidProfile(tuple(bids)))
        assert u[0] == pytest.approx(0.25, abs=1e-14)
        assert sum(u[1:]) == pytest.approx(1 / (4 * (2 * n - 3)), abs=1e-14)


def test_social_welfare_examples():
    for n in (3, 10, 100):
        bids = BidProfile(tuple([0.25] + [1 / (4 * (n - 1))] * (n - 1)))
        sw = social_welfare(lemma3(n), allocate(bids))
        assert sw == pytest.approx(0.5 + (n - 1) / (2 * (2 * n - 3)), abs=1e-13)
    game = Game.of([Power(1, 0.5), Power(1, 0.5)])
    assert social_welfare(game, Allocation((0.5, 0.5))) == pytest.approx(2 * math.sqrt(0.5))
    assert social_welfare(game, Allocation((0.0, 0.0))) == 0.0


def test_effective_welfare_budget_example():
    a = 0.5
    game = Game.of([Linear(1.0), Linear(a)], [a / (1 + a) ** 2, INF])
    alloc = allocate(BidProfile.for_game(game, [2 / 9, 1 / 9]))
    assert effective_welfare(game, alloc) == pytest.approx((a + a**2 + a**3) / (1 + a) ** 2, abs=1e-12)
    # benchmark: bidder 1 takes just enough to hit the cap
    c1 = a / (1 + a) ** 2
    star = Allocation((c1, 1 - c1))
    assert effective_welfare(game, star) == pytest.approx((2 * a + a**2 + a**3) / (1 + a) ** 2, abs=1e-12)


def test_profile_budget_enforced():
    game = Game.of([Linear(1.0), Linear(1.0)], [0.1, INF])
    with pytest.raises(GameError):
        BidProfile.for_game(game, [0.2, 0.1])
    with pytest.raises(GameError):
        BidProfile((-0.1, 0.2))
    with pytest.raises(GameError):
        Game((Bidder(Linear(1.0)),))
    with pytest.raises(GameError):
        utility_profile(game, BidProfile((0.1, 0.1, 0.1)))


def test_distribution_probabilities():
    p = BidProfile((0.1, 0.2))
    with pytest.raises(GameError):
        CorrelatedBidDistribution(((p, 0.5), (p, 0.4)))


def _random_game(rng, n, budgeted):
    from propalloc.harness import random_valuation
    vals = [random_valuation(rng) for _ in range(n)]
    budgets = [float(rng.uniform(0.05, 1.0)) if budgeted else INF for _ in range(n)]
    return Game.of(vals, budgets)


def test_properties_random_profiles():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(2, 6))
        game = _random_game(rng, n, budgeted=bool(rng.integers(2)))
        bids = [float(min(rng.uniform(0.01, 1.0), c)) for c in game.budgets]
        profile = BidProfile.for_game(game, bids)
        alloc = allocate(profile)
        assert math.fsum(alloc.shares) == pytest.approx(1.0, abs=1e-12)
        sw = social_welfare(game, alloc)
        assert sw == pytest.approx(math.fsum(utility_profile(game, profile)) + profile.total, abs=1e-12)
        ew = effective_welfare(game, alloc)
        assert ew <= sw + 1e-12
        if not game.budgeted:
            assert ew == pytest.approx(sw, abs=1e-15)
        point = CorrelatedBidDistribution.point_mass(profile)
        assert effective_welfare(game, point) == pytest.approx(ew, abs=1e-12)
        assert expected_social_welfare(game, point) == pytest.approx(sw, abs=1e-12)
        # share monotonicity under finite perturbation
        others = profile.others(0)
        h = 1e-3
        assert share(bids[0] + h, others) > share(bids[0], others)
        assert share(bids[0], others + h) < share(bids[0], others)


def test_random_allocation_caps_expectation():
    game = Game.of([Linear(1.0), Linear(1.0)], [0.4, INF])
    dist = CorrelatedBidDistribution(((BidProfile((0.3, 0.1)), 0.5), (BidProfile((0.1, 0.3)), 0.5)))
    # bidder 1 expects value 0.5*(0.75) + 0.5*(0.25) = 0.5, capped at 0.4; bidder 2 expects 0.5
    assert effective_welfare(game, dist) == pytest.approx(0.9)
