import math

import numpy as np
import pytest

from oracles import grid_bayes_fixed_point, grid_best_response
from propalloc.bayesian import (
    REPORTED_POINT, AppendixCParams, BayesianGame, BidderType, appendix_c_constraints,
    appendix_c_objective, appendix_c_program, bayesian_welfare, expected_utility,
    opponent_totals, pure_bayes_nash, verify_bayes_nash,
)
from propalloc.harness import random_valuation
from propalloc.mechanism import INF, BidProfile, Game, GameError, utility_profile
from propalloc.solvers import optimal_welfare, pure_nash
from propalloc.valuations import Linear, Power


def two_type_game():
    return BayesianGame((
        (BidderType(Linear(1.0)),),
        (BidderType(Linear(1.0), prob=0.5), BidderType(Linear(0.2), prob=0.5)),
    ))


def lemma3_bayes(n):
    return BayesianGame.from_game(Game.of([Linear(1.0)] + [Linear((n - 1) / (2 * n - 3))] * (n - 1)))


def test_expected_utility_examples():
    bg = BayesianGame((
        (BidderType(Linear(1.0)),),
        (BidderType(Linear(1.0), prob=0.5), BidderType(Linear(1.0), prob=0.5)),
    ))
    profile = ((0.5,), (0.25, 1.0))
    assert expected_utility(bg, 0, 0, 0.5, profile) == pytest.approx(0.0, abs=1e-15)
    assert expected_utility(bg, 0, 0, 0.0, profile) == 0.0
    full = Game.of([Linear(1.0), Power(1.0, 0.5)])
    single = BayesianGame.from_game(full)
    assert expected_utility(single, 1, 0, 0.2, ((0.3,), (0.2,))) == pytest.approx(
        utility_profile(full, BidProfile((0.3, 0.2)))[1], abs=1e-15)
    with pytest.raises(IndexError):
        expected_utility(bg, 2, 0, 0.1, profile)
    with pytest.raises(IndexError):
        expected_utility(bg, 1, 5, 0.1, profile)


def test_type_probabilities_validated():
    with pytest.raises(GameError):
        BayesianGame(((BidderType(Linear(1.0)),),
                      (BidderType(Linear(1.0), prob=0.5), BidderType(Linear(1.0), prob=0.4))))


def test_single_type_matches_full_information():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        budgets = [float(rng.uniform(0.05, 1.0)) if rng.random() < 0.5 else INF for _ in range(n)]
        game = Game.of([random_valuation(rng) for _ in range(n)], budgets)
        full = pure_nash(game)
        bres = pure_bayes_nash(BayesianGame.from_game(game))
        assert bres.converged
        assert [b[0] for b in bres.profile] == pytest.approx(list(full.bids.bids), abs=1e-8)
        w = bayesian_welfare(BayesianGame.from_game(game), [(b,) for b in full.bids.bids])
        assert w.expected_sw == pytest.approx(full.sw, abs=1e-12)
        assert w.sw_star == pytest.approx(optimal_welfare(game)[1], abs=1e-12)
        assert w.expected_ew == pytest.approx(full.ew, abs=1e-12)


def test_tight_construction_bayesian():
    res = pure_bayes_nash(lemma3_bayes(10))
    assert res.converged
    assert res.profile[0][0] == pytest.approx(0.25, abs=1e-6)
    assert max(abs(b[0] - 1 / 36) for b in res.profile[1:]) < 1e-6
    bg = lemma3_bayes(100)
    w = bayesian_welfare(bg, [(0.25,)] + [(1 / 396,)] * 99)
    assert w.expected_sw / w.sw_star == pytest.approx(0.5 + 99 / 394, abs=1e-9)


def test_two_type_matches_grid_fixed_point():
    res = pure_bayes_nash(two_type_game())
    assert res.converged and res.epsilon <= 1e-6
    b1, b2 = grid_bayes_fixed_point(Linear(1.0), [Linear(1.0), Linear(0.2)], [0.5, 0.5])
    assert res.profile[0][0] == pytest.approx(b1, abs=1e-3)
    assert list(res.profile[1]) == pytest.approx(b2, abs=1e-3)


def test_epsilon_against_grid_deviation():
    bg = two_type_game()
    res = pure_bayes_nash(bg)
    opps = opponent_totals(bg, res.profile, 1)
    for k, t in enumerate(bg.types[1]):
        _, best, _, _ = grid_best_response(t.valuation, t.budget, opps)
        assert best - expected_utility(bg, 1, k, res.profile[1][k], res.profile) <= 1e-6
    assert verify_bayes_nash(bg, res.profile) <= 1e-6


def test_expected_utility_concave():
    bg = two_type_game()
    profile = ((0.2,), (0.3, 0.05))
    ys = np.linspace(0, 1, 1001)
    vals = np.array([expected_utility(bg, 0, 0, float(y), profile) for y in ys])
    assert (vals[1:-1] - 0.5 * (vals[:-2] + vals[2:])).min() >= -1e-10


def test_unbudgeted_ew_equals_sw():
    bg = two_type_game()
    w = bayesian_welfare(bg, pure_bayes_nash(bg).profile)
    assert w.expected_ew == pytest.approx(w.expected_sw, abs=1e-12)
    assert w.ew_star == pytest.approx(w.sw_star, abs=1e-9)
    assert w.expected_sw >= 0.5 * w.sw_star


def test_bayesian_ew_cap_inside_outer_expectation():
    # bidder 1: one type, budget 0.3; opponents' types change her share, cap applies to the average
    bg = BayesianGame((
        (BidderType(Linear(1.0), budget=0.3),),
        (BidderType(Linear(1.0), prob=0.5), BidderType(Linear(0.1), prob=0.5)),
    ))
    profile = ((0.3,), (0.1, 0.9))
    w = bayesian_welfare(bg, profile)
    own = 0.5 * (0.3 / 0.4) + 0.5 * (0.3 / 1.2)
    other = 0.5 * 1.0 * (0.1 / 0.4) + 0.5 * 0.1 * (0.9 / 1.2)
    assert w.expected_ew == pytest.approx(min(own, 0.3) + other, abs=1e-12)


def test_correlated_program_reported_point():
    obj = appendix_c_objective(*REPORTED_POINT.astuple())
    c1, c2 = appendix_c_constraints(*REPORTED_POINT.astuple())
    assert abs(obj - 0.7154) <= 1e-3
    assert c1 >= -2e-4 and c2 >= -2e-4
    assert abs(c1) <= 2e-4 and abs(c2) <= 2e-4


def test_correlated_program_params_validated():
    with pytest.raises(ValueError):
        AppendixCParams(alpha=1.5, gamma=0.1, delta=0.1, p1=0.5, p2=0.5)
    with pytest.raises(ValueError):
        appendix_c_program(grid_resolution=5)


@pytest.mark.slow
def test_correlated_program_program():
    point, obj = appendix_c_program()
    c1, c2 = appendix_c_constraints(*point.astuple())
    assert obj <= 0.7160
    assert c1 >= -1e-9 and c2 >= -1e-9
    assert obj == pytest.approx(appendix_c_objective(*point.astuple()), abs=1e-12)
