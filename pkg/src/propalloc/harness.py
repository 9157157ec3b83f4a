"""Game files, random instances and batch experiments."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .bayesian import BayesianGame, BidderType, pure_bayes_nash
from .bounds import DiscreteDistribution, SmoothnessParams, poa_report, smoothness_certificate
from .mechanism import INF, Bidder, BidProfile, CorrelatedBidDistribution, Game, GameError
from .solvers import SolverConfig, optimal_welfare, pure_nash
from .valuations import Linear, PiecewiseLinear, Power, ValuationFunction, from_dict

AnyGame = Union[Game, BayesianGame]


class GameSpecError(ValueError):
    """Malformed or invalid game file."""


# -- parsing ---------------------------------------------------------------


def _budget(raw: Any, where: str) -> float:
    if raw is None or raw in ("inf", "Infinity", "+inf"):
        return INF
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise GameSpecError(f"{where}: budget {raw!r} is not a number") from None
    if not value > 0:
        raise GameSpecError(f"{where}: budget must be positive, got {value!r}")
    return value


def _valuation(raw: Any, where: str) -> ValuationFunction:
    if not isinstance(raw, dict):
        raise GameSpecError(f"{where}: valuation must be an object")
    try:
        return from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise GameSpecError(f"{where}: bad valuation {raw!r} ({exc})") from None


def parse_game_spec(text: str) -> AnyGame:
    """Parse a JSON game file; bidders with a ``types`` list make it Bayesian."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameSpecError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or not isinstance(data.get("bidders"), list):
        raise GameSpecError("top level must be an object with a 'bidders' list")
    raw_bidders = data["bidders"]
    bayesian = any(isinstance(b, dict) and "types" in b for b in raw_bidders)
    try:
        if bayesian:
            types = []
            for i, b in enumerate(raw_bidders):
                if "types" not in b:
                    raise GameSpecError(f"bidder {i}: missing 'types' in a Bayesian game")
                row = []
                for k, t in enumerate(b["types"]):
                    where = f"bidder {i}, type {k}"
                    if "prob" not in t:
                        raise GameSpecError(f"{where}: missing 'prob'")
                    row.append(BidderType(_valuation(t.get("valuation"), where),
                                          _budget(t.get("budget"), where), float(t["prob"])))
                types.append(tuple(row))
            return BayesianGame(tuple(types))
        bidders = []
        for i, b in enumerate(raw_bidders):
            where = f"bidder {i}"
            if not isinstance(b, dict):
                raise GameSpecError(f"{where}: must be an object")
            bidders.append(Bidder(_valuation(b.get("valuation"), where), _budget(b.get("budget"), where)))
        return Game(tuple(bidders))
    except GameError as exc:
        raise GameSpecError(str(exc)) from None


def game_to_dict(game: AnyGame) -> dict:
    def budget(c: float) -> float | None:
        return None if math.isinf(c) else c

    if isinstance(game, BayesianGame):
        return {"bidders": [{"types": [{"valuation": t.valuation.to_dict(), "budget": budget(t.budget),
                                        "prob": t.prob} for t in ts]} for ts in game.types]}
    return {"bidders": [{"valuation": b.valuation.to_dict(), "budget": budget(b.budget)} for b in game.bidders]}


def parse_profile(text: str, game: Game) -> BidProfile:
    data = json.loads(text)
    bids = data["bids"] if isinstance(data, dict) else data
    return BidProfile.for_game(game, [float(b) for b in bids])


def parse_distribution(text: str, game: Game) -> CorrelatedBidDistribution:
    """``{"support": [{"bids": [...], "prob": p}, ...]}``; a bare profile is a point mass."""
    data = json.loads(text)
    if isinstance(data, dict) and "support" in data:
        support = tuple((BidProfile.for_game(game, s["bids"]), float(s["prob"])) for s in data["support"])
        return CorrelatedBidDistribution(support)
    return CorrelatedBidDistribution.point_mass(parse_profile(text, game))


# -- random instances ------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    instances: int = 1000
    seed: int = 0
    min_bidders: int = 2
    max_bidders: int = 6
    family_mix: tuple[float, float, float] = (0.4, 0.4, 0.2)  # linear, power, piecewise-linear
    budgeted: bool = False
    budget_range: tuple[float, float] = (0.01, 1.0)
    bayesian: bool = False
    min_types: int = 2
    max_types: int = 3
    checks: tuple[str, ...] = ("poa", "smoothness", "epsilon")
    epsilon_tolerance: float = 1e-6
    output: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.instances < 1:
            raise ValueError("instances must be at least 1")
        if not 2 <= self.min_bidders <= self.max_bidders:
            raise ValueError("need 2 <= min_bidders <= max_bidders")
        if not 1 <= self.min_types <= self.max_types:
            raise ValueError("need 1 <= min_types <= max_types")
        if len(self.family_mix) != 3 or any(w < 0 for w in self.family_mix) or sum(self.family_mix) <= 0:
            raise ValueError("family_mix needs three non-negative weights")
        lo, hi = self.budget_range
        if not 0 < lo <= hi:
            raise ValueError("budget_range must satisfy 0 < lo <= hi")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        for key in ("family_mix", "budget_range", "checks"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


CHECKS = ("poa", "smoothness", "epsilon")


def random_valuation(rng: np.random.Generator, mix: Sequence[float] = (0.4, 0.4, 0.2)) -> ValuationFunction:
    weights = np.asarray(mix, dtype=float)
    family = rng.choice(3, p=weights / weights.sum())
    if family == 0:
        return Linear(float(rng.uniform(0.1, 2.0)))
    if family == 1:
        return Power(float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.3, 1.0)))
    segments = int(rng.integers(2, 5))
    slopes = sorted(rng.uniform(0.05, 2.0, size=segments), reverse=True)
    breaks = np.sort(rng.choice(np.arange(1, 100), size=segments - 1, replace=False)) / 100.0
    return PiecewiseLinear.from_slopes([float(s) for s in slopes], [float(b) for b in breaks])


def _random_budget(rng: np.random.Generator, spec: ExperimentSpec) -> float:
    if not spec.budgeted:
        return INF
    lo, hi = spec.budget_range
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _probabilities(rng: np.random.Generator, k: int) -> list[float]:
    p = [float(x) for x in rng.dirichlet(np.ones(k))]
    p[-1] = 1.0 - math.fsum(p[:-1])
    return p


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def generate_random_game(spec: ExperimentSpec, index: int) -> AnyGame:
    """Deterministic in ``(spec.seed, index)``."""
    rng = instance_rng(spec.seed, index)
    n = int(rng.integers(spec.min_bidders, spec.max_bidders + 1))
    if spec.bayesian:
        types = []
        for _ in range(n):
            k = int(rng.integers(spec.min_types, spec.max_types + 1))
            probs = _probabilities(rng, k)
            types.append(tuple(BidderType(random_valuation(rng, spec.family_mix), _random_budget(rng, spec), p)
                               for p in probs))
        return BayesianGame(tuple(types))
    return Game(tuple(Bidder(random_valuation(rng, spec.family_mix), _random_budget(rng, spec))
                      for _ in range(n)))


def random_lemma1_instance(rng: np.random.Generator) -> tuple[ValuationFunction, float, float, DiscreteDistribution]:
    """Random (v, z, mu, gamma) with mu in (1/3, 2] and a 1-5 point gamma of positive mean."""
    v = random_valuation(rng)
    z = float(rng.uniform(0.0, 1.0))
    mu = float(2.0 - rng.uniform(0.0, 5.0 / 3.0))
    k = int(rng.integers(1, 6))
    values = rng.uniform(0.0, 2.0, size=k)
    values[rng.random(k) < 0.2] = 0.0
    if values.max() <= 0:
        values[0] = float(rng.uniform(0.01, 2.0))
    gamma = DiscreteDistribution(tuple(zip((float(x) for x in values), _probabilities(rng, k))))
    return v, z, mu, gamma


# -- experiments -----------------------------------------------------------


@dataclass
class ExperimentSummary:
    rows: list[dict] = field(default_factory=list)
    violations: int = 0
    nonconverged: int = 0
    errors: int = 0
    min_ratio_sw: float = math.nan
    mean_ratio_sw: float = math.nan
    min_ratio_ew: float = math.nan
    mean_ratio_ew: float = math.nan
    min_ratio_sw_ew: float = math.nan

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.errors == 0

    def as_record(self) -> dict:
        out = asdict(self)
        del out["rows"]
        out["instances"] = len(self.rows)
        return out


WELFARE_COLUMNS = ("sw", "sw_star", "ew", "ew_star", "ratio_sw", "ratio_ew", "ratio_sw_ew")


def run_instance(spec: ExperimentSpec, index: int) -> dict:
    """Solve one generated game and evaluate the configured checks."""
    row: dict[str, Any] = {"game_id": index}
    try:
        game = generate_random_game(spec, index)
        row["n"] = game.n
        config = SolverConfig()
        result = pure_bayes_nash(game, config) if isinstance(game, BayesianGame) else pure_nash(game, config)
        row["converged"] = bool(result.converged)
        row["epsilon"] = result.epsilon
        if not result.converged:
            row.update({k: math.nan for k in WELFARE_COLUMNS})
            row["violations"] = ""
            return row
        report = poa_report(game, result)
        rec = report.as_record()
        row.update({k: rec[k] for k in WELFARE_COLUMNS})
        row["degenerate"] = report.degenerate
        failed = []
        if "poa" in spec.checks:
            failed += report.violations
        if "epsilon" in spec.checks and result.epsilon > spec.epsilon_tolerance:
            failed.append("epsilon")
        if "smoothness" in spec.checks and isinstance(game, Game) and not game.budgeted:
            cert = smoothness_certificate(game, result.bids, optimal_welfare(game)[0], SmoothnessParams(0.5, 1.0))
            row["smoothness_slack"] = cert.slack
            if not cert.holds:
                failed.append("smoothness")
        row["violations"] = ";".join(failed)
    except Exception as exc:  # one bad instance must not sink the batch
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _summarise(rows: list[dict]) -> ExperimentSummary:
    summary = ExperimentSummary(rows=rows)
    for row in rows:
        if "error" in row:
            summary.errors += 1
        elif not row.get("converged", False):
            summary.nonconverged += 1
        elif row.get("violations"):
            summary.violations += 1

    def stats(key: str) -> tuple[float, float]:
        vals = [r[key] for r in rows if isinstance(r.get(key), float) and not math.isnan(r[key])]
        return (min(vals), math.fsum(vals) / len(vals)) if vals else (math.nan, math.nan)

    summary.min_ratio_sw, summary.mean_ratio_sw = stats("ratio_sw")
    summary.min_ratio_ew, summary.mean_ratio_ew = stats("ratio_ew")
    summary.min_ratio_sw_ew, _ = stats("ratio_sw_ew")
    return summary


def run_experiment(spec: ExperimentSpec) -> ExperimentSummary:
    indices = range(spec.instances)
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(run_instance, [spec] * spec.instances, indices, chunksize=16))
    else:
        rows = [run_instance(spec, i) for i in indices]
    summary = _summarise(rows)
    if spec.output:
        with open(spec.output, "w", newline="") as fh:
            fh.write(rows_to_csv(rows))
    return summary


# -- output ----------------------------------------------------------------


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(repr(float(v)) for v in value)
    return value


def rows_to_csv(rows: Iterable[dict]) -> str:
    rows = list(rows)
    columns: list[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def rows_to_json(rows: Iterable[dict]) -> str:
    return json.dumps(_json_safe(list(rows)), indent=2, sort_keys=False)
