"""Value iteration and metric-aware abstraction planning.

The value-loss pipeline: quotient the behavioral metric at epsilon, plan
optimally in the aggregated MDP, lift the greedy policy back through the
partition, and evaluate it in the original MDP. The suboptimality
max_s V*(s) - V^pi(s) is certified against 2 * max_intra_diameter /
(1 - gamma); the looser a-priori form 2 * epsilon / (1 - gamma) is reported
alongside but can be beaten by chained classes, so it is never asserted.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .mdp import FiniteMdp
from .metric import DEFAULT_TOLERANCE, MetricRun, solve_metric
from .quotient import EpsilonQuotient, build_abstract_mdp, build_quotient


def _iteration_cap(gamma: float, tolerance: float) -> int:
    est = math.log(tolerance) / math.log(gamma) if 0 < tolerance < 1 else 1.0
    return max(20, int(10 * math.ceil(est)))


@njit(cache=True)
def _vi_kernel(transitions, rewards, gamma, tol, cap):
    n, m = rewards.shape
    v = np.zeros(n)
    res = np.inf
    it = 0
    while it < cap and res > tol:
        it += 1
        res = 0.0
        nv = np.empty(n)
        for s in range(n):
            best = -np.inf
            for a in range(m):
                q = rewards[s, a]
                acc = 0.0
                for t in range(n):
                    acc += transitions[s, a, t] * v[t]
                q += gamma * acc
                if q > best:
                    best = q
            nv[s] = best
            r = abs(best - v[s])
            if r > res:
                res = r
        v = nv
    return v, it, res


@njit(cache=True)
def _policy_eval_kernel(transitions, rewards, policy, gamma, tol, cap):
    n = rewards.shape[0]
    v = np.zeros(n)
    res = np.inf
    it = 0
    while it < cap and res > tol:
        it += 1
        res = 0.0
        nv = np.empty(n)
        for s in range(n):
            a = policy[s]
            acc = 0.0
            for t in range(n):
                acc += transitions[s, a, t] * v[t]
            q = rewards[s, a] + gamma * acc
            nv[s] = q
            r = abs(q - v[s])
            if r > res:
                res = r
        v = nv
    return v, it, res


def value_iteration(m: FiniteMdp, tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """Optimal values via Bellman iteration from zero, sup-norm stop.

    The returned vector is within tolerance * gamma / (1 - gamma) of V*.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    cap = _iteration_cap(m.gamma, tolerance)
    v, it, res = _vi_kernel(m.transitions, m.rewards, m.gamma, tolerance, cap)
    if res > tolerance:
        raise RuntimeError(f"value iteration failed to reach {tolerance:g} in {cap} steps")
    return v


def greedy_policy(m: FiniteMdp, v: np.ndarray) -> np.ndarray:
    """One-step lookahead argmax per state; ties break to the lowest action."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (m.n_states,):
        raise ValueError(f"value vector must have shape ({m.n_states},), got {v.shape}")
    q = m.rewards + m.gamma * np.tensordot(m.transitions, v, axes=(2, 0))
    return np.argmax(q, axis=1)


def policy_value(m: FiniteMdp, policy, tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """Evaluate a deterministic stationary policy by fixed-point iteration."""
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    p = np.asarray(policy, dtype=np.int64)
    if p.shape != (m.n_states,):
        raise ValueError(f"policy must have shape ({m.n_states},), got {p.shape}")
    if np.any(p < 0) or np.any(p >= m.n_actions):
        raise ValueError(f"policy actions must lie in [0, {m.n_actions})")
    cap = _iteration_cap(m.gamma, tolerance)
    v, it, res = _policy_eval_kernel(m.transitions, m.rewards, p, m.gamma, tolerance, cap)
    if res > tolerance:
        raise RuntimeError(f"policy evaluation failed to reach {tolerance:g} in {cap} steps")
    return v


def lift_policy(q: EpsilonQuotient, abstract_policy) -> np.ndarray:
    """Pull an abstract policy back to states: every member of a class plays
    its class's action."""
    ap = np.asarray(abstract_policy, dtype=np.int64)
    if ap.shape != (q.n_classes,):
        raise ValueError(f"abstract policy must have shape ({q.n_classes},), got {ap.shape}")
    return ap[q.partition]


@dataclass(frozen=True)
class ValueLossReport:
    """Suboptimality of planning through an epsilon-quotient.

    loss = max_s (V*(s) - V^lifted(s)). bound_diam is the asserted
    certificate 2 * max_intra_diameter / (1 - gamma); bound_eps is the
    reported-only 2 * epsilon / (1 - gamma). findings lists any violated
    guarantee verbatim.
    """

    epsilon: float
    n_classes: int
    max_intra_diameter: float
    loss: float
    bound_eps: float
    bound_diam: float
    diam_bound_ok: bool
    eps_bound_ok: bool
    findings: tuple

    @property
    def ok(self) -> bool:
        return not self.findings


# Slack granted to the diameter-form bound: two value functions and one
# metric, each solved to DEFAULT_TOLERANCE, cannot miss by more than this.
LOSS_BOUND_SLACK = 1e-6


def value_loss_report(
    m: FiniteMdp,
    epsilon: float,
    metric_tolerance: float = DEFAULT_TOLERANCE,
    vi_tolerance: float = DEFAULT_TOLERANCE,
    run: MetricRun | None = None,
    weights=None,
) -> ValueLossReport:
    """Run the full abstraction-planning loop and certify the value loss.

    Args:
        m: ground MDP.
        epsilon: quotient threshold on the behavioral metric.
        metric_tolerance/vi_tolerance: solver stops.
        run: optional precomputed MetricRun for m (avoids re-solving).
        weights: optional positive per-state aggregation weights.
    """
    if run is None:
        run = solve_metric(m, metric_tolerance)
    q = build_quotient(run.final, epsilon)
    abstract = build_abstract_mdp(m, q.partition, weights=weights)
    v_abs = value_iteration(abstract, vi_tolerance)
    pi_abs = greedy_policy(abstract, v_abs)
    pi = lift_policy(q, pi_abs)
    v_star = value_iteration(m, vi_tolerance)
    v_pi = policy_value(m, pi, vi_tolerance)
    loss = float(np.max(v_star - v_pi))

    denom = 1.0 - m.gamma
    bound_eps = 2.0 * epsilon / denom
    bound_diam = 2.0 * q.max_intra_diameter / denom
    diam_ok = loss <= bound_diam + LOSS_BOUND_SLACK
    eps_ok = loss <= bound_eps + LOSS_BOUND_SLACK
    findings = []
    if not diam_ok:
        findings.append(
            f"value loss {loss:.9g} exceeds diameter bound "
            f"2*{q.max_intra_diameter:.9g}/(1-{m.gamma}) = {bound_diam:.9g}"
        )
    return ValueLossReport(
        epsilon=float(epsilon),
        n_classes=q.n_classes,
        max_intra_diameter=q.max_intra_diameter,
        loss=loss,
        bound_eps=bound_eps,
        bound_diam=bound_diam,
        diam_bound_ok=diam_ok,
        eps_bound_ok=eps_ok,
        findings=tuple(findings),
    )


def values_to_csv(path, v: np.ndarray, policy=None) -> None:
    """Per-state values (and optionally actions) as CSV columns."""
    v = np.asarray(v)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if policy is None:
            writer.writerow(["state", "value"])
            for s, x in enumerate(v):
                writer.writerow([s, "%.17g" % x])
        else:
            p = np.asarray(policy)
            writer.writerow(["state", "value", "action"])
            for s, x in enumerate(v):
                writer.writerow([s, "%.17g" % x, int(p[s])])
