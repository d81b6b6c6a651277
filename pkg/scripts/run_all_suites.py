#!/usr/bin/env python3
"""Run every experiment suite on its default environment and print flags.

Usage: python3 scripts/run_all_suites.py [output_dir] [--side N] [--fast]

--fast shrinks the adversarial budget so the whole sweep stays under a
couple of minutes; drop it to reproduce the full search.
"""
import argparse
import sys
import time

from mdpmetric import ExperimentConfig, run_suite
from mdpmetric.suites import SUITE_NAMES


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("output_dir", nargs="?", default="out")
    ap.add_argument("--side", type=int, default=5)
    ap.add_argument("--gamma", type=float, default=0.95)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fast", action="store_true")
    args = ap.parse_args()

    failures = 0
    for name in SUITE_NAMES:
        kwargs = dict(
            suite=name,
            side=args.side,
            gamma=args.gamma,
            seed=args.seed,
            epsilons=(0.1, 0.5, 1.0, 2.0),
        )
        if name == "adversarial":
            kwargs.update(
                environment="random",
                n_states=4,
                n_actions=2,
                adversarial_generations=40 if args.fast else 1000,
            )
        cfg = ExperimentConfig(**kwargs)
        t0 = time.perf_counter()
        report = run_suite(cfg, output_dir=args.output_dir)
        dt = time.perf_counter() - t0
        status = "ok" if report.ok else "FAIL"
        print(f"{name:<22s} {status:>4s}  {dt:7.2f}s  flags={sum(report.flags.values())}/{len(report.flags)}")
        for flag, value in sorted(report.flags.items()):
            if not value:
                print(f"    FAIL {flag}", file=sys.stderr)
                failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
