#!/usr/bin/env python3
"""Standalone evolutionary search for abstraction-bound violations.

Usage: python3 scripts/run_adversarial.py [--states N] [--actions M]
       [--gamma G] [--seed S] [--generations K] [--bound B] [output_dir]

Prints the best objective per milestone generation and the strict
re-verification of the worst instance. A best objective that stays
negative means no candidate ever exceeded the diameter-form value-loss
bound.
"""
import argparse
import sys

from mdpmetric import ExperimentConfig, run_suite


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("output_dir", nargs="?", default="out")
    ap.add_argument("--states", type=int, default=4)
    ap.add_argument("--actions", type=int, default=2)
    ap.add_argument("--gamma", type=float, default=0.95)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--generations", type=int, default=1000)
    ap.add_argument("--bound", type=float, default=10.0)
    args = ap.parse_args()

    cfg = ExperimentConfig(
        suite="adversarial",
        environment="random",
        n_states=args.states,
        n_actions=args.actions,
        gamma=args.gamma,
        seed=args.seed,
        adversarial_generations=args.generations,
        adversarial_bound=args.bound,
    )
    report = run_suite(cfg, output_dir=args.output_dir)
    rows = report.rows
    print(f"best objective      {rows['best_objective']:+.6g}")
    print(f"generations         {rows['n_generations']} (converged={rows['converged']})")
    print(f"evaluations         {rows['n_evaluations']}")
    print(f"value loss          {rows['value_loss']:.6g}")
    print(f"diameter bound      {rows['bound_diam']:.6g}")
    print(f"contraction (pairs) {rows['contraction_pair_max']:.6g} <= gamma={cfg.gamma}")
    print(f"lipschitz slack     {rows['value_lipschitz_slack']:.3g}")
    for flag, value in sorted(report.flags.items()):
        print(f"{flag:<22s} {'pass' if value else 'FAIL'}")
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
