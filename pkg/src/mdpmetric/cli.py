"""Command-line front end.

Subcommands: metric, quotient, plan, logic, suite, adversarial. Results go
to stdout (and artifact files), diagnostics to stderr. Exit codes: 0 on
success, 1 when a checked invariant fails (suite flag false, violated
bound, invalid metric), 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import __version__
from .logic import FormulaSyntaxError, eval_formula, parse_formula
from .mdp import MdpFormatError, load_mdp
from .metric import metric_to_csv, residuals_to_csv, solve_metric
from .planning import value_loss_report
from .quotient import build_quotient, save_quotient
from .suites import (
    ConfigError,
    adversarial_search,
    config_from_toml,
    run_suite,
)

USAGE_ERROR = 2
INVARIANT_ERROR = 1


def _fmt(x: float) -> str:
    return "%.12g" % x


def _print_matrix(d: np.ndarray, file=None) -> None:
    for row in d:
        print(" ".join(_fmt(x) for x in row), file=file or sys.stdout)


def _cmd_metric(args) -> int:
    m = load_mdp(args.mdp)
    run = solve_metric(m, tolerance=args.tol)
    print(
        f"solved in {run.iterations} sweeps, certified error {_fmt(run.certified_error)}",
        file=sys.stderr,
    )
    if args.csv:
        metric_to_csv(run.final, args.csv)
        print(f"wrote {args.csv}", file=sys.stderr)
    if args.residuals:
        residuals_to_csv(run, args.residuals)
        print(f"wrote {args.residuals}", file=sys.stderr)
    _print_matrix(run.final.d)
    if not run.final.is_valid():
        print("metric axioms violated", file=sys.stderr)
        return INVARIANT_ERROR
    return 0


def _cmd_quotient(args) -> int:
    m = load_mdp(args.mdp)
    run = solve_metric(m, tolerance=args.tol)
    q = build_quotient(run.final, args.epsilon)
    print(
        f"epsilon {_fmt(q.epsilon)}: {q.n_states} states -> {q.n_classes} classes",
        file=sys.stderr,
    )
    for cid, members in enumerate(q.class_members):
        print(f"class {cid}: {' '.join(str(s) for s in members)}")
    _print_matrix(q.d_q.d)
    if args.out:
        save_quotient(q, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_plan(args) -> int:
    m = load_mdp(args.mdp)
    rep = value_loss_report(
        m, args.epsilon, metric_tolerance=args.tol, vi_tolerance=args.vi_tol
    )
    print(f"epsilon {_fmt(rep.epsilon)} classes {rep.n_classes}")
    print(f"value_loss {_fmt(rep.loss)}")
    print(f"bound_eps {_fmt(rep.bound_eps)}")
    print(f"bound_diam {_fmt(rep.bound_diam)}")
    for finding in rep.findings:
        print(finding, file=sys.stderr)
    return 0 if rep.ok else INVARIANT_ERROR


def _cmd_logic(args) -> int:
    m = load_mdp(args.mdp)
    formula = parse_formula(args.formula)
    values = eval_formula(m, formula)
    for s, x in enumerate(values):
        print(f"s{s} {_fmt(x)}")
    return 0


def _cmd_suite(args) -> int:
    cfg = config_from_toml(args.config)
    report = run_suite(cfg, output_dir=args.output_dir)
    for name in sorted(report.flags):
        print(f"{report.suite}.{name}: {'pass' if report.flags[name] else 'FAIL'}")
    if not report.ok:
        failed = sorted(k for k, v in report.flags.items() if not v)
        print(f"failed flags: {', '.join(failed)}", file=sys.stderr)
        return INVARIANT_ERROR
    return 0


def _cmd_adversarial(args) -> int:
    cfg = config_from_toml(args.config)
    if cfg.suite != "adversarial":
        cfg = dataclasses.replace(cfg, suite="adversarial")
    report = run_suite(cfg, output_dir=args.output_dir)
    rows = report.rows
    print(f"best_objective {_fmt(rows['best_objective'])}")
    print(f"generations {rows['n_generations']} evaluations {rows['n_evaluations']}")
    for name in sorted(report.flags):
        print(f"adversarial.{name}: {'pass' if report.flags[name] else 'FAIL'}")
    return 0 if report.ok else INVARIANT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdpmetric",
        description="Behavioral metrics, quotients, and planning diagnostics for finite MDPs.",
    )
    parser.add_argument("--version", action="version", version=f"mdpmetric {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metric", help="solve the behavioral metric of an MDP")
    p.add_argument("--mdp", required=True, help="MDP JSON file")
    p.add_argument("--tol", type=float, default=1e-9, help="residual stopping threshold")
    p.add_argument("--csv", help="also write the matrix as CSV")
    p.add_argument("--residuals", help="also write per-sweep residuals as CSV")
    p.set_defaults(fn=_cmd_metric)

    p = sub.add_parser("quotient", help="epsilon-quotient of the behavioral metric")
    p.add_argument("--mdp", required=True)
    p.add_argument("--epsilon", "--eps", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", help="write the quotient as JSON")
    p.set_defaults(fn=_cmd_quotient)

    p = sub.add_parser("plan", help="value loss of planning on the quotient")
    p.add_argument("--mdp", required=True)
    p.add_argument("--epsilon", "--eps", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--vi-tol", type=float, default=1e-9)
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("logic", help="evaluate a quantitative formula per state")
    p.add_argument("--mdp", required=True)
    p.add_argument("--formula", required=True, help="s-expression, e.g. '(reward 0)'")
    p.set_defaults(fn=_cmd_logic)

    p = sub.add_parser("suite", help="run an experiment suite from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", help="override the configured output directory")
    p.set_defaults(fn=_cmd_suite)

    p = sub.add_parser("adversarial", help="evolutionary search for bound violations")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", help="override the configured output directory")
    p.set_defaults(fn=_cmd_adversarial)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ConfigError, MdpFormatError, FormulaSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
