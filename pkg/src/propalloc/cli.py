"""Command line entry point: ``propalloc <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bayesian, bounds, harness, solvers
from .mechanism import Game, allocate, effective_welfare, social_welfare
from .valuations import from_dict


def _read_game(path: str):
    return harness.parse_game_spec(Path(path).read_text())


def _emit(rows: list[dict], args) -> None:
    text = harness.rows_to_json(rows) if args.format == "json" else harness.rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _require_full_information(game) -> Game:
    if not isinstance(game, Game):
        raise SystemExit("this command needs a full-information game file")
    return game


def cmd_solve(args) -> int:
    game = _read_game(args.game)
    config = solvers.SolverConfig()
    if args.what == "bayes":
        if not isinstance(game, bayesian.BayesianGame):
            game = bayesian.BayesianGame.from_game(game)
        result = bayesian.pure_bayes_nash(game, config)
        row = {"profile": json.dumps(result.profile), "epsilon": result.epsilon,
               "iterations": result.iterations, "converged": result.converged}
        if result.converged:
            row.update(bounds.poa_report(game, result).as_record())
        _emit([row], args)
        return 0 if result.converged else 1
    game = _require_full_information(game)
    if args.what == "nash":
        result = solvers.pure_nash(game, config, method=args.method)
        row = result.as_record()
        if result.converged:
            row.update(bounds.poa_report(game, result).as_record())
        _emit([row], args)
        return 0 if result.converged else 1
    alloc, value = (solvers.optimal_effective_welfare if args.effective else solvers.optimal_welfare)(game)
    _emit([{"shares": list(alloc.shares), "ew_star" if args.effective else "sw_star": value}], args)
    return 0


def cmd_verify(args) -> int:
    game = _require_full_information(_read_game(args.game))
    text = Path(args.profile).read_text()
    if args.what == "nash":
        profile = harness.parse_profile(text, game)
        alloc = allocate(profile)
        row = {"bids": list(profile.bids), "epsilon": solvers.verify_epsilon_nash(game, profile),
               "sw": social_welfare(game, alloc), "ew": effective_welfare(game, alloc)}
    else:
        dist = harness.parse_distribution(text, game)
        row = {"support": len(dist.support), "epsilon": solvers.verify_cce(game, dist),
               "ew": effective_welfare(game, dist)}
    _emit([row], args)
    return 0


def cmd_check(args) -> int:
    if args.what == "lemma1":
        rows = []
        if args.instance:
            data = json.loads(Path(args.instance).read_text())
            instances = [(from_dict(data["valuation"]), float(data["z"]), float(data["mu"]),
                          bounds.DiscreteDistribution(tuple(map(tuple, data["gamma"]))))]
        else:
            rng = np.random.default_rng(args.seed)
            instances = [harness.random_lemma1_instance(rng) for _ in range(args.random)]
        for k, (v, z, mu, gamma) in enumerate(instances):
            res = bounds.lemma1_check(v, z, mu, gamma)
            rows.append({"instance": k, "z": z, "mu": mu, "lhs": res.lhs, "rhs": res.rhs,
                         "slack": res.slack, "holds": res.holds})
        _emit(rows, args)
        return 0 if all(r["holds"] for r in rows) else 1
    game = _require_full_information(_read_game(args.game))
    profile = harness.parse_profile(Path(args.profile).read_text(), game)
    alloc, _ = solvers.optimal_welfare(game)
    res = bounds.smoothness_certificate(game, profile, alloc, bounds.SmoothnessParams(args.lam, args.mu))
    _emit([{"lhs": res.lhs, "rhs": res.rhs, "slack": res.slack, "holds": res.holds}], args)
    return 0 if res.holds else 1


def cmd_replicate(args) -> int:
    rows = []
    ok = True
    if args.case == "lemma3":
        reports = [bounds.replicate_lemma3(n) for n in args.n]
    elif args.case == "budget":
        reports = [bounds.replicate_budget(a) for a in args.alpha]
    else:
        reports = [bounds.replicate_appendix_c(args.grid)]
    for report in reports:
        rows.extend(report.rows())
        ok &= report.passed
        for note in report.notes:
            logging.getLogger("propalloc").warning("%s: %s", report.case, note)
    if args.case == "lemma3" and len(reports) > 1:
        ratios = [r.values["ratio"] for r in reports]
        decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
        rows.append({"case": "lemma3", "check": "ratios decreasing in n", "value": float(decreasing),
                     "expected": 1.0, "deviation": 0.0, "tolerance": 0.0, "passed": decreasing})
        ok &= decreasing
    _emit(rows, args)
    return 0 if ok else 1


def cmd_experiment(args) -> int:
    data = json.loads(Path(args.spec).read_text())
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    data["output"] = None
    spec = harness.ExperimentSpec.from_dict(data)
    start = time.perf_counter()
    summary = harness.run_experiment(spec)
    _emit(summary.rows, args)
    record = summary.as_record()
    record["seconds"] = round(time.perf_counter() - start, 3)
    print(json.dumps(harness._json_safe(record)), file=sys.stderr)
    return 0 if summary.ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(prog="propalloc", description="Proportional allocation games toolkit")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve for an equilibrium or an optimum")
    p.add_argument("what", choices=("nash", "optimal", "bayes"))
    p.add_argument("game")
    p.add_argument("--effective", action="store_true", help="maximise budget-capped welfare")
    p.add_argument("--method", choices=("aggregate", "dynamics"), default="aggregate")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", parents=[common], help="epsilon of a profile or bid distribution")
    p.add_argument("what", choices=("nash", "cce"))
    p.add_argument("game")
    p.add_argument("profile")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("check", parents=[common], help="instance checks of the welfare inequalities")
    p.add_argument("what", choices=("lemma1", "smoothness"))
    p.add_argument("game", nargs="?")
    p.add_argument("profile", nargs="?")
    p.add_argument("--random", type=int, default=1000)
    p.add_argument("--instance")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=1.0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replicate", parents=[common], help="rebuild a named construction")
    p.add_argument("case", choices=("lemma3", "budget", "appendix-c"))
    p.add_argument("--n", type=int, nargs="+", default=[2, 4, 10, 100, 1000])
    p.add_argument("--alpha", type=float, nargs="+", default=[0.5, 0.1, 0.01])
    p.add_argument("--grid", type=int, default=10)
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("experiment", parents=[common], help="batch over random games")
    p.add_argument("spec")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.verb == "check" and args.what == "smoothness" and not (args.game and args.profile):
        raise SystemExit("check smoothness needs <game> <profile>")
    if args.verb == "check" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except harness.GameSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
