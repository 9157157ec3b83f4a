"""Concave, non-decreasing valuation families on the unit share interval.

Every family is normalised so that ``v(0) = 0``. Values are immutable.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Any, Union


class DomainError(ValueError):
    """Raised when a share lies outside the valuation's domain."""


def _check_share(x: float, *, closed_right: bool = True) -> None:
    if closed_right:
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"share {x!r} outside [0, 1]")
    elif not 0.0 <= x < 1.0:
        raise DomainError(f"share {x!r} outside [0, 1)")


@dataclass(frozen=True)
class Linear:
    slope: float

    kind = "linear"

    def __call__(self, x: float) -> float:
        return self.slope * x

    def right_derivative(self, x: float) -> float:
        return self.slope

    def max_share_at_slope(self, lam: float) -> float:
        return 1.0 if self.slope >= lam else 0.0

    def inverse(self, value: float) -> float:
        if value <= 0.0:
            return 0.0
        if self.slope <= 0.0 or value >= self.slope:
            return 1.0
        return value / self.slope

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "linear", "slope": self.slope}


@dataclass(frozen=True)
class Power:
    """``coef * x**exp`` with ``0 < exp <= 1``."""

    coef: float
    exp: float

    kind = "power"

    def __call__(self, x: float) -> float:
        if x == 0.0:
            return 0.0
        return self.coef * x**self.exp

    def right_derivative(self, x: float) -> float:
        if self.exp == 1.0:
            return self.coef
        if x == 0.0:
            return math.inf if self.coef > 0.0 else 0.0
        return self.coef * self.exp * x ** (self.exp - 1.0)

    def max_share_at_slope(self, lam: float) -> float:
        if self.exp == 1.0 or self.coef == 0.0:
            return 1.0 if self.coef >= lam else 0.0
        if lam <= 0.0:
            return 1.0
        # coef * exp * x**(exp-1) >= lam  <=>  x <= (lam / (coef*exp))**(1/(exp-1))
        log_x = math.log(lam / (self.coef * self.exp)) / (self.exp - 1.0)
        return 1.0 if log_x >= 0.0 else math.exp(log_x)

    def inverse(self, value: float) -> float:
        if value <= 0.0:
            return 0.0
        if self.coef <= 0.0 or value >= self.coef:
            return 1.0
        return (value / self.coef) ** (1.0 / self.exp)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "power", "coef": self.coef, "exp": self.exp}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear interpolation through ``knots``.

    ``knots`` must start at ``(0, 0)`` and end at ``x = 1``; a missing
    origin or right end is rejected by :func:`validate`.
    """

    knots: tuple[tuple[float, float], ...]
    _xs: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _slopes: tuple[float, ...] = field(init=False, repr=False, compare=False)

    kind = "pwl"

    def __post_init__(self) -> None:
        knots = tuple((float(x), float(v)) for x, v in self.knots)
        object.__setattr__(self, "knots", knots)
        xs = tuple(x for x, _ in knots)
        slopes = []
        for (x0, v0), (x1, v1) in zip(knots, knots[1:]):
            slopes.append((v1 - v0) / (x1 - x0) if x1 > x0 else math.nan)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_slopes", tuple(slopes))

    @classmethod
    def from_slopes(cls, slopes: list[float], breakpoints: list[float]) -> "PiecewiseLinear":
        """Build from segment slopes and interior breakpoints (``len(slopes) - 1`` of them)."""
        xs = [0.0, *breakpoints, 1.0]
        knots = [(0.0, 0.0)]
        for k, s in enumerate(slopes):
            knots.append((xs[k + 1], knots[-1][1] + s * (xs[k + 1] - xs[k])))
        return cls(tuple(knots))

    @property
    def slopes(self) -> tuple[float, ...]:
        return self._slopes

    def _segment(self, x: float) -> int:
        # index of the segment whose half-open interval [x_k, x_{k+1}) contains x
        k = bisect.bisect_right(self._xs, x) - 1
        return min(max(k, 0), len(self._slopes) - 1)

    def __call__(self, x: float) -> float:
        k = self._segment(x)
        x0, v0 = self.knots[k]
        return v0 + self._slopes[k] * (x - x0)

    def right_derivative(self, x: float) -> float:
        return self._slopes[self._segment(x)]

    def max_share_at_slope(self, lam: float) -> float:
        best = 0.0
        for k, s in enumerate(self._slopes):
            if s >= lam:
                best = self._xs[k + 1]
            else:
                break
        return best

    def inverse(self, value: float) -> float:
        if value <= 0.0:
            return 0.0
        for k, s in enumerate(self._slopes):
            x1, v1 = self.knots[k + 1]
            if v1 >= value:
                x0, v0 = self.knots[k]
                return x0 + (value - v0) / s if s > 0.0 else x0
        return 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "pwl", "knots": [list(k) for k in self.knots]}


ValuationFunction = Union[Linear, Power, PiecewiseLinear]


def evaluate(v: ValuationFunction, x: float) -> float:
    """Value of share ``x`` in [0, 1]."""
    _check_share(x)
    return v(x)


def right_derivative(v: ValuationFunction, x: float) -> float:
    """Right-hand derivative on [0, 1); ``inf`` for a singular power at 0."""
    _check_share(x, closed_right=False)
    return v.right_derivative(x)


@dataclass
class ValidationReport:
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok


def validate(v: ValuationFunction) -> ValidationReport:
    report = ValidationReport()
    fail = report.failures.append
    if isinstance(v, Linear):
        if not math.isfinite(v.slope):
            fail("slope must be finite")
        elif v.slope < 0:
            fail("negative slope: not non-decreasing")
    elif isinstance(v, Power):
        if not math.isfinite(v.coef) or v.coef < 0:
            fail("coefficient must be finite and non-negative")
        if not 0.0 < v.exp <= 1.0:
            fail("exponent outside (0, 1]: not concave")
    elif isinstance(v, PiecewiseLinear):
        knots = v.knots
        if len(knots) < 2:
            fail("need at least two knots")
            return report
        if knots[0] != (0.0, 0.0):
            fail("first knot must be (0, 0)")
        if knots[-1][0] != 1.0:
            fail("last knot must sit at x = 1")
        xs = [x for x, _ in knots]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            fail("knot positions must be strictly increasing")
            return report
        if any(x < 0.0 or x > 1.0 for x in xs):
            fail("knot positions outside [0, 1]")
        if any(val < 0.0 for _, val in knots):
            fail("negative value")
        slopes = v.slopes
        if any(s < 0.0 for s in slopes):
            fail("negative slope: not non-decreasing")
        # equal slopes recomputed from knots can differ in the last bits
        if any(b > a + 1e-12 * max(1.0, abs(a)) for a, b in zip(slopes, slopes[1:])):
            fail("slope increases across a knot: convex kink")
    else:
        fail(f"unknown valuation type {type(v).__name__}")
    return report


def from_dict(spec: dict[str, Any]) -> ValuationFunction:
    """Parse the literal syntax used in game files."""
    kind = spec.get("kind")
    if kind == "linear":
        return Linear(float(spec["slope"]))
    if kind == "power":
        return Power(float(spec["coef"]), float(spec["exp"]))
    if kind == "pwl":
        return PiecewiseLinear(tuple((float(x), float(val)) for x, val in spec["knots"]))
    raise ValueError(f"unknown valuation kind {kind!r}")
