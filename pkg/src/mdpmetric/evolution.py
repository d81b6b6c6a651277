"""Derivative-free maximization by differential evolution (rand/1/bin).

Deliberately minimal and fully deterministic: a seeded PCG64 generator
drives every draw, selection is greedy (trial replaces its parent when not
worse), and the run stops early once the population's objective values have
collapsed (std <= atol + tol * |mean|) or the generation budget runs out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DeResult:
    best_x: np.ndarray
    best_value: float
    trace: np.ndarray  # best objective after each generation, nondecreasing
    n_evaluations: int
    n_generations: int
    converged: bool  # population collapsed before the generation budget


def maximize(
    objective,
    bounds,
    *,
    seed: int,
    max_generations: int = 1000,
    mutation: float = 0.8,
    crossover: float = 0.9,
    population_size: int | None = None,
    tol: float = 0.01,
    atol: float = 0.0,
    callback=None,
) -> DeResult:
    """Maximize `objective` over a box by rand/1/bin differential evolution.

    Args:
        objective: callable mapping a 1-d float vector to a float.
        bounds: (dim, 2) array of [low, high] per coordinate.
        seed: generator seed; identical seeds give identical runs.
        max_generations: generation budget (each costs pop evaluations).
        mutation: differential weight F.
        crossover: crossover rate CR.
        population_size: defaults to min(15 * dim, 300).
        tol, atol: early-stop thresholds on the population spread.
        callback: optional f(generation, best_value) hook, e.g. progress logs.
    """
    b = np.asarray(bounds, dtype=np.float64)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError(f"bounds must have shape (dim, 2), got {b.shape}")
    if np.any(b[:, 0] > b[:, 1]):
        raise ValueError("every bound must satisfy low <= high")
    dim = b.shape[0]
    if dim < 1:
        raise ValueError("bounds must describe at least one dimension")
    lo, hi = b[:, 0], b[:, 1]
    pop_n = population_size if population_size else min(15 * dim, 300)
    if pop_n < 4:
        pop_n = 4  # rand/1 needs three distinct partners
    if not (0.0 <= crossover <= 1.0):
        raise ValueError(f"crossover must lie in [0, 1], got {crossover}")
    if mutation <= 0.0:
        raise ValueError(f"mutation must be positive, got {mutation}")

    rng = np.random.default_rng(seed)
    pop = lo + rng.random((pop_n, dim)) * (hi - lo)
    vals = np.array([float(objective(pop[i])) for i in range(pop_n)])
    n_evals = pop_n
    trace = []
    converged = False
    gen = 0
    for gen in range(1, max_generations + 1):
        for i in range(pop_n):
            others = rng.choice(pop_n - 1, size=3, replace=False)
            others = np.where(others >= i, others + 1, others)  # skip self
            r1, r2, r3 = pop[others[0]], pop[others[1]], pop[others[2]]
            mutant = np.clip(r1 + mutation * (r2 - r3), lo, hi)
            mask = rng.random(dim) < crossover
            mask[rng.integers(dim)] = True  # at least one coordinate crosses
            trial = np.where(mask, mutant, pop[i])
            tv = float(objective(trial))
            n_evals += 1
            if tv >= vals[i]:
                pop[i] = trial
                vals[i] = tv
        best = float(vals.max())
        trace.append(best)
        if callback is not None:
            callback(gen, best)
        if vals.std() <= atol + tol * abs(float(vals.mean())):
            converged = True
            break
    best_i = int(np.argmax(vals))
    return DeResult(
        best_x=pop[best_i].copy(),
        best_value=float(vals[best_i]),
        trace=np.asarray(trace),
        n_evaluations=n_evals,
        n_generations=gen,
        converged=converged,
    )
