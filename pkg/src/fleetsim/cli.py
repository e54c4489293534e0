"""Command line interface: run, report, replay, selftest."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetsim",
        description="Attacker-defender wargame between a modular and a "
                    "conventional fleet.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write reports")
    run.add_argument("--config", type=Path, default=None,
                     help="scenario JSON merged over the built-in defaults")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--months-stochastic", type=int, default=None)
    run.add_argument("--months-learning", type=int, default=None)
    run.add_argument("--out", type=Path, required=True)

    report = sub.add_parser("report", help="recompute reports from a run log")
    report.add_argument("--log", type=Path, required=True)
    report.add_argument("--out", type=Path, required=True)

    replay = sub.add_parser("replay", help="re-run a log's scenario and "
                                           "verify byte-identical output")
    replay.add_argument("--log", type=Path, required=True)

    sub.add_parser("selftest", help="run the built-in oracle checks")
    return parser


def _overrides_from_args(args) -> dict:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    stages = {}
    if args.months_stochastic is not None:
        stages["stochastic_months"] = args.months_stochastic
    if args.months_learning is not None:
        stages["learning_months"] = args.months_learning
    if stages:
        overrides["stages"] = stages
    return overrides


def cmd_run(args) -> int:
    from .config import ConfigError, load_scenario
    from .harness import run_simulation
    from .metrics import emit_reports
    try:
        config = load_scenario(args.config, _overrides_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    result = run_simulation(config, log_path=out / "run.jsonl")
    emit_reports(result.rows, out / "metrics", config,
                 summary_extra=result.summary)
    print(f"simulated {config.stages.total_months} months, "
          f"{result.events} events -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .config import scenario_from_dict
    from .harness import load_log
    from .metrics import emit_reports, rows_from_log
    records = load_log(args.log)
    if not records or records[0].get("type") != "config":
        print("log does not start with a config record", file=sys.stderr)
        return EXIT_RUNTIME
    config = scenario_from_dict(records[0]["config"])
    rows = rows_from_log(records, config)
    emit_reports(rows, args.out, config)
    print(f"reports written to {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .config import scenario_from_dict
    from .harness import load_log, run_simulation
    original = Path(args.log).read_text().splitlines()
    records = load_log(args.log)
    if not records or records[0].get("type") != "config":
        print("log does not start with a config record", file=sys.stderr)
        return EXIT_RUNTIME
    config = scenario_from_dict(records[0]["config"])
    result = run_simulation(config)
    if result.log_lines == original:
        print(f"replay identical: {len(original)} records")
        return EXIT_OK
    for i, (a, b) in enumerate(zip(original, result.log_lines)):
        if a != b:
            print(f"replay diverged at record {i}:\n  logged: {a[:160]}\n"
                  f"  replay: {b[:160]}", file=sys.stderr)
            break
    else:
        print(f"replay length differs: {len(original)} vs "
              f"{len(result.log_lines)}", file=sys.stderr)
    return EXIT_RUNTIME


def cmd_selftest(_args) -> int:
    import numpy as np
    failures = 0

    def check(name: str, ok: bool) -> None:
        nonlocal failures
        print(f"  [{'ok' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1

    from .config import load_scenario
    from .domain import classify_strategy, strategy_to_order
    config = load_scenario()
    ok = True
    for role in ("attacker", "defender"):
        for band in config.strategy_bands(role):
            demand = np.array([30.0, 50.0, 40.0])
            order = strategy_to_order(band, demand)
            ok = ok and classify_strategy(role, order, demand, config) == band.index
    check("strategy round trip", ok)

    from .engagement import damage_probability
    check("damage probability tanh",
          abs(damage_probability(0.5, 30, 30) - np.tanh(0.5)) < 1e-12)

    from .mip import MipProblem, solve_mip
    import itertools
    c = np.array([-1.0, -2.0])
    A = np.array([[1.0, 1.0], [2.0, 1.0]])
    b = np.array([5.0, 7.0])
    prob = MipProblem(c=c, A_ub=A, b_ub=b, lb=np.zeros(2),
                      ub=np.full(2, 10.0), integer_mask=np.ones(2, dtype=bool))
    sol = solve_mip(prob)
    best = min(c @ np.array(p) for p in itertools.product(range(11), repeat=2)
               if (A @ np.array(p) <= b).all())
    check("mip vs enumeration", abs(sol.objective - best) < 1e-9)

    from .neural import Network, numeric_gradients
    rng = np.random.default_rng(0)
    net = Network.lstm_classifier(4, 3, 5, (6,), seed=3)
    X = rng.normal(0, 1, (5, 4, 4))
    y = rng.integers(0, 3, 5)
    _, grads = net.loss_and_grads(X, y)
    ngrads = numeric_gradients(net, X, y)
    worst = max(np.max(np.abs(g - n) / np.maximum(1e-8, np.abs(g) + np.abs(n)))
                for g, n in zip(grads, ngrads))
    check(f"gradient check (rel err {worst:.1e})", worst < 1e-4)

    from .harness import run_simulation
    from .config import load_scenario as _load
    small = _load(overrides={"seed": 3, "stages": {"stochastic_months": 1,
                                                   "learning_months": 0,
                                                   "hours_per_month": 48}})
    r1 = run_simulation(small)
    r2 = run_simulation(small)
    check("determinism (48 h twice)", r1.log_lines == r2.log_lines)

    print("selftest:", "ok" if failures == 0 else f"{failures} failures")
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "selftest":
            return cmd_selftest(args)
    except Exception as exc:  # pragma: no cover - defensive top level
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
