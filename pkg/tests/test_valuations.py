import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from propalloc.valuations import (
    DomainError, Linear, PiecewiseLinear, Power, evaluate, from_dict, right_derivative, validate,
)


def test_eval_examples():
    assert evaluate(Linear(1.0), 0.5) == 0.5
    assert evaluate(Power(1.0, 0.5), 0.25) == pytest.approx(0.5, abs=1e-15)
    assert evaluate(Linear(3 / 5), 1 / 6) == pytest.approx(0.1, abs=1e-15)


def test_right_derivative_examples():
    assert right_derivative(Linear(0.7), 0.3) == 0.7
    assert right_derivative(Power(1.0, 0.5), 0.25) == pytest.approx(1.0)
    assert right_derivative(Power(1.0, 0.5), 0.0) == math.inf


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(Linear(1.0), 1.5)
    with pytest.raises(DomainError):
        evaluate(Linear(1.0), -0.1)
    with pytest.raises(DomainError):
        right_derivative(Linear(1.0), 1.0)


def test_validate_examples():
    assert not validate(Linear(-1.0)).ok
    assert validate(PiecewiseLinear.from_slopes([2, 1, 0.5], [0.2, 0.5])).ok
    report = validate(PiecewiseLinear.from_slopes([1, 2], [0.5]))
    assert not report.ok and "convex" in report.failures[0]
    assert not validate(Power(1.0, 1.5)).ok
    assert not validate(PiecewiseLinear(((0.1, 0.0), (1.0, 1.0)))).ok


def test_pwl_right_slope_at_kink():
    v = PiecewiseLinear.from_slopes([2.0, 1.0], [0.5])
    assert v(0.5) == pytest.approx(1.0)
    assert v.right_derivative(0.5) == 1.0
    assert v.right_derivative(0.49) == 2.0


def test_round_trip_dict():
    for v in (Linear(0.3), Power(2.0, 0.4), PiecewiseLinear.from_slopes([2, 1], [0.3])):
        assert from_dict(v.to_dict()) == v
    with pytest.raises(ValueError):
        from_dict({"kind": "cubic"})


def test_inverse_and_max_share():
    v = Power(1.0, 0.5)
    assert v.inverse(0.5) == pytest.approx(0.25)
    assert v.max_share_at_slope(1.0) == pytest.approx(0.25)
    assert v.max_share_at_slope(1e-300) == 1.0
    w = PiecewiseLinear.from_slopes([2.0, 1.0, 0.5], [0.2, 0.6])
    assert w.max_share_at_slope(1.0) == pytest.approx(0.6)
    assert w.inverse(w(0.4)) == pytest.approx(0.4)


slopes = st.lists(st.floats(0.0, 3.0), min_size=1, max_size=4)
valuations = st.one_of(
    st.builds(Linear, st.floats(0.0, 3.0)),
    st.builds(Power, st.floats(0.0, 3.0), st.floats(0.05, 1.0)),
    slopes.map(lambda s: PiecewiseLinear.from_slopes(
        sorted(s, reverse=True), [(k + 1) / len(s) for k in range(len(s) - 1)])),
)
share = st.floats(0.0, 1.0)


@settings(max_examples=400, deadline=None)
@given(valuations, share, share, share)
def test_concave_and_monotone(v, x, y, t):
    assert validate(v).ok
    assert v(0.0) == 0.0
    lo, hi = min(x, y), max(x, y)
    assert v(lo) <= v(hi) + 1e-12
    assert v(t * x + (1 - t) * y) >= t * v(x) + (1 - t) * v(y) - 1e-12


@settings(max_examples=200, deadline=None)
@given(valuations)
def test_right_derivative_non_increasing(v):
    grid = np.linspace(0.0, 1.0, 201)[:-1]
    d = [right_derivative(v, float(x)) for x in grid]
    assert all(b <= a + 1e-12 for a, b in zip(d, d[1:]))


def test_random_concavity_batch():
    # 10^4 random (v, x, y, t) triples, drawn from the generator families
    from propalloc.harness import random_valuation
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10_000):
        v = random_valuation(rng)
        x, y, t = rng.random(3)
        worst = min(worst, v(t * x + (1 - t) * y) - t * v(x) - (1 - t) * v(y),
                    v(max(x, y)) - v(min(x, y)))
    assert worst >= -1e-12
