"""Command-line front end: ``qdblab {simulate,bounds,size,table1,tradeoff,trace}``.

Exit codes: 0 success, 1 Monte Carlo result inconsistent with the exact oracle
(only with ``--strict``), 2 bad arguments, 3 a bound requested outside its regime.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bounds
from .adversaries import STRATEGIES, make_behavior, tf_replay_sessions
from .harness import ENGINES, ExperimentSpec, monte_carlo
from .protocol import SessionConfig, simulate_session

OUTPUT_DIR_ENV = "QDBLAB_OUTPUT_DIR"
EXIT_INCONSISTENT, EXIT_USAGE, EXIT_REGIME = 1, 2, 3


def _emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if not path.is_absolute() and os.environ.get(OUTPUT_DIR_ENV):
        path = Path(os.environ[OUTPUT_DIR_ENV]) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _session_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--attack", choices=[s.replace("_", "-") for s in STRATEGIES] + list(STRATEGIES),
                   default="honest")
    p.add_argument("--n", type=int, default=64, help="fast-phase rounds")
    p.add_argument("--tau", type=int, default=None, help="acceptance threshold (default n)")
    p.add_argument("--eta", type=float, default=0.0, help="depolarizing parameter per hop")
    p.add_argument("--bound-b", type=float, default=300.0, help="distance bound in metres")
    p.add_argument("--distance", type=float, default=None,
                   help="prover distance in metres (default B, or 1.5B for df/tf)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file (default stdout)")


def _config(args) -> SessionConfig:
    attack = args.attack.replace("-", "_")
    distance = args.distance
    if distance is None:
        distance = 1.5 * args.bound_b if attack in ("df", "tf") else args.bound_b
    return SessionConfig(n=args.n, tau=args.n if args.tau is None else args.tau,
                         bound_b=args.bound_b, prover_distance=distance, eta=args.eta,
                         seed=args.seed)


def _cmd_simulate(args) -> int:
    spec = ExperimentSpec(_config(args), args.attack, args.trials, args.engine, args.format, args.out)
    stats = monte_carlo(spec)
    _emit(stats.to_json() if args.format == "json" else stats.to_csv(), args.out)
    if args.strict and not stats.consistent():
        print(f"per-round rate deviates {stats.oracle_deviation():.2f} sigma from the oracle",
              file=sys.stderr)
        return EXIT_INCONSISTENT
    return 0


def _cmd_bounds(args) -> int:
    n, tau, p = args.n, args.tau, args.p
    if args.side == "upper":
        log2 = bounds.chernoff_upper_log2(n, tau, p)
    else:
        log2 = bounds.chernoff_lower_log2(n, tau, p)
    exact = bounds.binomial_tail_exact_log2(n, tau, p, args.side) if n <= 10_000 else None
    rows = [
        ("kl_nats", bounds.format_prob(bounds.kl_bernoulli(tau / n, p))),
        ("side", args.side),
        ("chernoff_bound", bounds.format_prob(2.0 ** log2)),
        ("chernoff_log2", bounds.format_log2(log2)),
        ("exact_tail_log2", "" if exact is None else bounds.format_log2(exact)),
    ]
    _emit("quantity,value\n" + "".join(f"{k},{v}\n" for k, v in rows), args.out)
    return 0


def _cmd_size(args) -> int:
    lines = []
    if args.eps is not None:
        if args.n is None:
            raise ValueError("--eps needs --n")
        tau = bounds.threshold_size(args.n, args.p_df, args.p_mf, args.eps)
        lines += ["n,tau", f"{args.n},{tau}"]
    else:
        if args.u is None or args.p is None:
            raise ValueError("give --u and --p (rounds), or --n and --eps (threshold)")
        r = bounds.min_rounds(args.u, args.p, args.target_log2)
        eta = bounds.format_prob(bounds.max_noise(args.u)) if 0.5 < args.u < 1 else ""
        lines += ["n_required,tau,achieved_log2,eta_max",
                  f"{r.n_required},{r.tau},{bounds.format_log2(r.achieved_log2)},{eta}"]
    _emit("\n".join(lines), args.out)
    return 0


def _cmd_table1(args) -> int:
    _emit(bounds.table1_csv(args.target_log2), args.out)
    return 0


def _cmd_tradeoff(args) -> int:
    grid = args.u_grid if args.u_grid is not None else bounds.DEFAULT_U_GRID
    _emit(bounds.tradeoff_csv(bounds.tradeoff_curves(grid, args.target_log2)), args.out)
    return 0


def _cmd_trace(args) -> int:
    cfg = _config(args)
    attack = args.attack.replace("-", "_")
    if attack == "tf_replay":
        result = tf_replay_sessions(cfg)[1]
    else:
        result = simulate_session(cfg, make_behavior(attack))
    doc = {"transcript": result.transcript.to_dict(),
           "messages": [m.to_record() for m in result.log]}
    _emit(json.dumps(doc, sort_keys=True), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdblab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo over many sessions")
    _session_args(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--engine", choices=ENGINES, default="event")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 if the per-round rate is more than 4 sigma from the oracle")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("bounds", help="Chernoff bound and exact tail for explicit n, tau, p")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--side", choices=("upper", "lower"), default="upper")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("size", help="rounds for a target, threshold for a slack, noise tolerance")
    p.add_argument("--u", type=float, help="threshold ratio tau/n")
    p.add_argument("--p", type=float, help="per-round cheating probability")
    p.add_argument("--target-log2", type=float, default=bounds.DEFAULT_TARGET_LOG2)
    p.add_argument("--n", type=int)
    p.add_argument("--p-df", type=float, default=bounds.QDB_DF_PER_ROUND)
    p.add_argument("--p-mf", type=float, default=bounds.QDB_MF_PER_ROUND)
    p.add_argument("--eps", type=float, help="slack above the worst per-round probability")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_size)

    p = sub.add_parser("table1", help="Hancke-Kuhn vs QDB round comparison (CSV)")
    p.add_argument("--target-log2", type=float, default=bounds.DEFAULT_TARGET_LOG2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_table1)

    p = sub.add_parser("tradeoff", help="rounds and noise tolerance versus threshold ratio (CSV)")
    p.add_argument("--u-grid", type=_grid, default=None, help="comma-separated ratios")
    p.add_argument("--target-log2", type=float, default=bounds.DEFAULT_TARGET_LOG2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_tradeoff)

    p = sub.add_parser("trace", help="one session's transcript and message log as JSON")
    _session_args(p)
    p.set_defaults(func=_cmd_trace)
    return parser


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except bounds.RegimeError as exc:
        print(f"qdblab: regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except ValueError as exc:
        print(f"qdblab: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
