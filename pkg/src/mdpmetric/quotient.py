"""Epsilon-quotients: collapse states whose behavioral distance is small.

States are merged by the transitive closure of the relation d(s, t) <= eps
(union-find), so classes can chain: d(a,b) <= eps and d(b,c) <= eps puts a
and c together even if d(a,c) > eps. A consequence used by the idempotence
checks below: the quotient metric between *distinct* classes always exceeds
eps, hence re-quotienting the quotient metric space at the same eps is the
identity.

The quotient distance is the shortest-path closure of the class-wise minima
min_{x in c1, y in c2} d(x, y); both the raw minima and the closure are kept
because the gap between them is a useful diagnostic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .mdp import FiniteMdp
from .metric import (
    DEFAULT_TOLERANCE,
    MetricRun,
    PseudoMetricMatrix,
    floyd_warshall_closure,
    solve_metric,
)


def _as_distance_array(d) -> np.ndarray:
    if isinstance(d, PseudoMetricMatrix):
        return d.d
    a = np.asarray(d, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square distance matrix, got shape {a.shape}")
    return a


def epsilon_classes(d, epsilon: float) -> np.ndarray:
    """Partition states by the transitive closure of d <= epsilon.

    Returns an int array mapping state -> class id; ids are dense, ordered
    by each class's smallest member (class 0 contains state 0).
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    a = _as_distance_array(d)
    n = a.shape[0]
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j] <= epsilon:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    # dense ids in order of first appearance == smallest member
    ids = {}
    out = np.empty(n, dtype=np.int64)
    for i, r in enumerate(roots):
        if r not in ids:
            ids[r] = len(ids)
        out[i] = ids[r]
    return out


def _check_partition(partition, n_states=None) -> np.ndarray:
    p = np.asarray(partition, dtype=np.int64)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("partition must be a non-empty 1-d class-id array")
    if n_states is not None and p.size != n_states:
        raise ValueError(f"partition covers {p.size} states, expected {n_states}")
    k = int(p.max()) + 1
    if p.min() < 0 or len(np.unique(p)) != k:
        raise ValueError("class ids must be dense 0..k-1 with every class non-empty")
    return p


def quotient_metric(d, partition):
    """Distance between classes: min over member pairs, then shortest-path
    closed so the triangle inequality holds on the quotient.

    Returns (closed PseudoMetricMatrix, raw minima matrix).
    """
    a = _as_distance_array(d)
    p = _check_partition(partition, a.shape[0])
    k = int(p.max()) + 1
    members = [np.flatnonzero(p == c) for c in range(k)]
    dmin = np.zeros((k, k))
    for c1 in range(k):
        for c2 in range(c1 + 1, k):
            m = float(a[np.ix_(members[c1], members[c2])].min())
            dmin[c1, c2] = m
            dmin[c2, c1] = m
    closed = floyd_warshall_closure(dmin)
    return PseudoMetricMatrix(closed), dmin


@dataclass(frozen=True)
class EpsilonQuotient:
    """A partition at threshold epsilon plus the induced quotient metric."""

    epsilon: float
    partition: np.ndarray  # state -> class id
    class_members: tuple  # tuple of int tuples, class id -> member states
    d_q: PseudoMetricMatrix  # path-closed quotient distances
    d_min: np.ndarray  # raw pre-closure minima (diagnostic)
    intra_diameters: np.ndarray  # max within-class distance per class

    @property
    def n_states(self) -> int:
        return int(self.partition.size)

    @property
    def n_classes(self) -> int:
        return len(self.class_members)

    @property
    def compression_ratio(self) -> float:
        return self.n_classes / self.n_states

    @property
    def max_intra_diameter(self) -> float:
        return float(self.intra_diameters.max()) if self.n_classes else 0.0


def build_quotient(d, epsilon: float) -> EpsilonQuotient:
    """Quotient a distance matrix at threshold epsilon."""
    a = _as_distance_array(d)
    p = epsilon_classes(a, epsilon)
    k = int(p.max()) + 1
    members = tuple(tuple(int(s) for s in np.flatnonzero(p == c)) for c in range(k))
    d_q, dmin = quotient_metric(a, p)
    diam = np.zeros(k)
    for c in range(k):
        idx = np.flatnonzero(p == c)
        if idx.size > 1:
            diam[c] = float(a[np.ix_(idx, idx)].max())
    return EpsilonQuotient(
        epsilon=float(epsilon),
        partition=p,
        class_members=members,
        d_q=d_q,
        d_min=dmin,
        intra_diameters=diam,
    )


def build_abstract_mdp(m: FiniteMdp, partition, weights=None) -> FiniteMdp:
    """Aggregate an MDP over a state partition.

    Member states are averaged with the given positive weights (uniform by
    default), normalized within each class:

        R'(c, a)      = sum_{s in c} w_s R(s, a)
        P'(c, a, c')  = sum_{s in c} w_s sum_{t in c'} P(s, a, t)

    Rows stay stochastic for any weighting, so the result is a valid MDP on
    the classes.
    """
    p = _check_partition(partition, m.n_states)
    k = int(p.max()) + 1
    if weights is None:
        w = np.ones(m.n_states)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (m.n_states,):
            raise ValueError(f"weights must have shape ({m.n_states},), got {w.shape}")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be strictly positive and finite")

    rewards = np.zeros((k, m.n_actions))
    transitions = np.zeros((k, m.n_actions, k))
    # mass[s, a, c'] = P(s, a, class c')
    mass = np.zeros((m.n_states, m.n_actions, k))
    for c in range(k):
        mass[:, :, c] = m.transitions[:, :, p == c].sum(axis=2)
    for c in range(k):
        idx = np.flatnonzero(p == c)
        wc = w[idx] / w[idx].sum()
        rewards[c] = wc @ m.rewards[idx]
        transitions[c] = np.tensordot(wc, mass[idx], axes=(0, 0))
    meta = dict(m.metadata)
    meta["aggregated-classes"] = k
    return FiniteMdp(transitions, rewards, m.gamma, metadata=meta)


def pullback_metric(q: EpsilonQuotient, n_states: int) -> PseudoMetricMatrix:
    """Lift the quotient distance back to states: p[s, t] = d_q[c(s), c(t)].

    Within-class pairs land at distance zero; the result is a pseudo-metric
    whose quotient at the same epsilon reconstructs q exactly.
    """
    if n_states != q.n_states:
        raise ValueError(f"quotient covers {q.n_states} states, got n_states={n_states}")
    p = q.partition
    return PseudoMetricMatrix(q.d_q.d[np.ix_(p, p)])


def check_factorization(q: EpsilonQuotient, values, tolerance: float = 0.0) -> bool:
    """Does a per-state function factor through the partition (constant on
    every class, up to `tolerance`)?"""
    v = np.asarray(values)
    if v.shape[0] != q.n_states:
        raise ValueError(f"values must cover {q.n_states} states, got shape {v.shape}")
    for members in q.class_members:
        block = v[list(members)]
        if block.size > 1 and np.max(np.abs(block - block[0])) > tolerance:
            return False
    return True


@dataclass(frozen=True)
class IdempotenceReport:
    """Drift audit for quotienting twice. See `idempotence_check`."""

    epsilon: float
    rerun_metric_drift: float  # |d_M run1 - d_M run2|, determinism of the pipeline
    rerun_dq_drift: float
    requotient_singleton: bool  # quotient metric space re-quotients to singletons
    requotient_dq_drift: float
    abstract_n_classes: int  # informational: quotient of the aggregated MDP's metric
    abstract_bijection: bool
    abstract_dq_drift: float  # nan when classes do not biject
    ok: bool


def idempotence_check(
    m: FiniteMdp, epsilon: float, tolerance: float = DEFAULT_TOLERANCE,
    run: MetricRun | None = None,
) -> IdempotenceReport:
    """Quotient twice and measure every sensible notion of drift.

    Asserted (drives `ok`):
      * re-running the full solve+quotient pipeline reproduces d_M and d_q
        (deterministic code, so the drift is zero);
      * re-quotienting the quotient *metric space* (class points, distance
        d_q) at the same epsilon yields only singletons and carries d_q over
        unchanged - distinct classes always sit at d_q > epsilon.

    Reported only: quotienting the *aggregated MDP's* own behavioral metric.
    Aggregation averages rewards and transition mass, which legitimately
    moves distances, so its drift is informational (nan when the class
    counts do not even biject).
    """
    run1 = run if run is not None else solve_metric(m, tolerance)
    run2 = solve_metric(m, tolerance)
    q1 = build_quotient(run1.final, epsilon)
    q2 = build_quotient(run2.final, epsilon)
    rerun_metric_drift = float(np.max(np.abs(run1.final.d - run2.final.d)))
    if np.array_equal(q1.partition, q2.partition):
        rerun_dq_drift = float(np.max(np.abs(q1.d_q.d - q2.d_q.d)))
    else:
        rerun_dq_drift = math.inf

    q_meta = build_quotient(q1.d_q, epsilon)
    requotient_singleton = q_meta.n_classes == q1.n_classes
    if requotient_singleton:
        requotient_dq_drift = float(np.max(np.abs(q_meta.d_q.d - q1.d_q.d)))
    else:
        requotient_dq_drift = math.inf

    abstract = build_abstract_mdp(m, q1.partition)
    run_a = solve_metric(abstract, tolerance)
    qa = build_quotient(run_a.final, epsilon)
    abstract_bijection = qa.n_classes == q1.n_classes
    if abstract_bijection:
        abstract_dq_drift = float(np.max(np.abs(run_a.final.d - q1.d_q.d)))
    else:
        abstract_dq_drift = math.nan

    ok = (
        rerun_metric_drift <= tolerance
        and rerun_dq_drift <= tolerance
        and requotient_singleton
        and requotient_dq_drift <= tolerance
    )
    return IdempotenceReport(
        epsilon=float(epsilon),
        rerun_metric_drift=rerun_metric_drift,
        rerun_dq_drift=rerun_dq_drift,
        requotient_singleton=requotient_singleton,
        requotient_dq_drift=requotient_dq_drift,
        abstract_n_classes=qa.n_classes,
        abstract_bijection=abstract_bijection,
        abstract_dq_drift=abstract_dq_drift,
        ok=ok,
    )


def quotient_to_dict(q: EpsilonQuotient) -> dict:
    return {
        "epsilon": q.epsilon,
        "n_states": q.n_states,
        "n_classes": q.n_classes,
        "compression_ratio": q.compression_ratio,
        "partition": [int(c) for c in q.partition],
        "class_members": [list(ms) for ms in q.class_members],
        "d_q": q.d_q.d.tolist(),
        "d_min": q.d_min.tolist(),
        "intra_diameters": q.intra_diameters.tolist(),
    }


def save_quotient(q: EpsilonQuotient, path) -> None:
    with open(path, "w") as fh:
        json.dump(quotient_to_dict(q), fh, indent=1, sort_keys=True)
        fh.write("\n")
