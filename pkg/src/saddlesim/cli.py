"""Command-line entry point.

Subcommands: `run` executes one experiment config (TOML plus overrides),
`figure1` emits the canned benchmark comparison groups, `probe` runs the
structural probes, and `props` runs the invariant quick-checks.  On failure
a machine-readable `ERROR {...}` line goes to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from saddlesim.harness import apply_overrides, config_from_dict, figure1_suite, run_experiment
from saddlesim.lowerbound import (
    PROBE_ALGORITHMS,
    probe_solution_bound,
    probe_zero_chain,
    zero_chain_report_csv,
)
from saddlesim.props import run_props

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saddlesim",
        description="Distributed stochastic saddle-point optimization harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True, help="TOML experiment config")
    p_run.add_argument(
        "--override", nargs="*", default=[], metavar="KEY=VALUE",
        help="dotted-path overrides, e.g. problem.n=50 algorithm.gamma=0.01",
    )

    p_fig = sub.add_parser("figure1", help="emit the benchmark comparison groups")
    p_fig.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p_fig.add_argument("--out", required=True, help="output directory")
    p_fig.add_argument("--replications", type=int, default=None)
    p_fig.add_argument("--steps", type=int, default=None)
    p_fig.add_argument("--workers", type=int, default=1, help="seed-parallel worker cap")

    p_probe = sub.add_parser("probe", help="run a structural probe")
    probe_sub = p_probe.add_subparsers(dest="probe", required=True)

    p_zero = probe_sub.add_parser("zero-chain", help="nonzero-coordinate frontier cap")
    p_zero.add_argument("--algorithm", choices=PROBE_ALGORITHMS + ("all",), default="all")
    p_zero.add_argument("--lipschitz", type=float, default=2.0)
    p_zero.add_argument("--mu", type=float, default=1.0)
    p_zero.add_argument("--n", type=int, default=16)
    p_zero.add_argument("--delta", type=int, default=4, help="path length / placement distance")
    p_zero.add_argument("--comm-budget", type=int, default=8)
    p_zero.add_argument("--oracle-budget", type=int, default=64)
    p_zero.add_argument("--gamma", type=float, default=None)
    p_zero.add_argument("--out", default=None, help="write the per-round report CSV here")

    p_sol = probe_sub.add_parser("solution-bound", help="geometric-solution error bound")
    p_sol.add_argument("--lipschitz", type=float, default=10.0)
    p_sol.add_argument("--mu", type=float, default=1.0)
    p_sol.add_argument("--n", type=int, default=50)

    sub.add_parser("props", help="run the invariant quick-checks")
    return parser


def _cmd_run(args) -> int:
    with open(args.config, "rb") as fh:
        raw = tomllib.load(fh)
    raw = apply_overrides(raw, args.override)
    config = config_from_dict(raw)
    written = run_experiment(config)
    for path in written:
        print(path)
    return 0


def _cmd_figure1(args) -> int:
    root = figure1_suite(
        scale=args.scale, out_dir=args.out,
        replications=args.replications, steps=args.steps, workers=args.workers,
    )
    print(root)
    return 0


def _cmd_probe(args) -> int:
    if args.probe == "zero-chain":
        algorithms = PROBE_ALGORITHMS if args.algorithm == "all" else (args.algorithm,)
        all_passed = True
        for algorithm in algorithms:
            report = probe_zero_chain(
                algorithm, args.lipschitz, args.mu, args.n, args.delta,
                args.comm_budget, args.oracle_budget, gamma=args.gamma,
            )
            all_passed &= report.passed
            print(
                f"zero-chain {algorithm}: {'PASS' if report.passed else 'FAIL'} "
                f"(max frontier {report.max_frontier}, cap {report.cap}, "
                f"rounds {report.comm_rounds_used})"
            )
            if args.out:
                path = Path(args.out)
                if len(algorithms) > 1:
                    path = path.with_name(f"{path.stem}_{algorithm}{path.suffix}")
                path.write_text(zero_chain_report_csv(report), encoding="utf-8", newline="\n")
        if not all_passed:
            raise SystemExit(_fail({"probe": "zero-chain", "message": "frontier cap exceeded"}))
        return 0
    report = probe_solution_bound(args.lipschitz, args.mu, args.n)
    print(
        f"solution-bound: {'PASS' if report.passed else 'FAIL'} "
        f"(error {report.error:.6e}, bound {report.bound:.6e})"
    )
    if not report.passed:
        raise SystemExit(_fail({"probe": "solution-bound", "message": "bound violated"}))
    return 0


def _fail(payload: dict) -> int:
    print("ERROR " + json.dumps(payload, sort_keys=True), file=sys.stderr)
    return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "figure1":
            return _cmd_figure1(args)
        if args.command == "probe":
            return _cmd_probe(args)
        return 0 if run_props() else _fail({"command": "props", "message": "a property failed"})
    except SystemExit:
        raise
    except Exception as exc:  # surface a machine-readable error line
        return _fail({"type": type(exc).__name__, "message": str(exc)})


if __name__ == "__main__":
    sys.exit(main())
