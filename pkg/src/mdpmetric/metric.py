"""Behavioral pseudo-metric engine.

The metric is the unique fixed point of the operator

    K(d)(s1, s2) = max_a |R(s1,a) - R(s2,a)| + gamma * W1_d(P(s1,a), P(s2,a))

where W1_d is the exact 1-Wasserstein distance with ground cost d. K is a
gamma-contraction in the sup norm, so Picard iteration from the zero matrix
converges geometrically; the solver stops on the sup-norm residual and
reports the a-posteriori error bound residual * gamma / (1 - gamma).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .mdp import FiniteMdp
from .transport import w1_value

# Default sup-norm stopping tolerance for Picard iteration.
DEFAULT_TOLERANCE = 1e-9
# Pseudo-metric axioms are asserted up to this slack.
AXIOM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PseudoMetricMatrix:
    """Symmetric nonnegative matrix with zero diagonal; distances on states.

    Distinct states may sit at distance zero (behavioral equivalence), hence
    pseudo-metric. The triangle inequality is not enforced at construction
    (it is an O(n^3) check); `validate` audits all four axioms.
    """

    d: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.d, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("distance matrix contains non-finite entries")
        if a.size and np.max(np.abs(a - a.T)) > AXIOM_TOL:
            raise ValueError("distance matrix is not symmetric")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "d", a)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def diameter(self) -> float:
        return float(self.d.max()) if self.n else 0.0

    def validate(self, tolerance: float = AXIOM_TOL) -> list:
        """Return a list of axiom violations (empty when the matrix is a
        pseudo-metric up to `tolerance`)."""
        bad = []
        a = self.d
        if np.min(a) < -tolerance:
            bad.append(f"negative entry {np.min(a):.3e}")
        dg = np.max(np.abs(np.diag(a))) if self.n else 0.0
        if dg > tolerance:
            bad.append(f"non-zero diagonal {dg:.3e}")
        sym = np.max(np.abs(a - a.T)) if self.n else 0.0
        if sym > tolerance:
            bad.append(f"asymmetry {sym:.3e}")
        # triangle: d[i,j] <= d[i,k] + d[k,j] for all k
        worst = 0.0
        for k in range(self.n):
            excess = a - (a[:, k : k + 1] + a[k : k + 1, :])
            worst = max(worst, float(excess.max()))
        if worst > tolerance:
            bad.append(f"triangle violation {worst:.3e}")
        return bad

    def is_valid(self, tolerance: float = AXIOM_TOL) -> bool:
        return not self.validate(tolerance)


@dataclass(frozen=True)
class MetricRun:
    """Result of one Picard solve: the fixed point plus convergence telemetry."""

    final: PseudoMetricMatrix
    iterations: int
    residuals: np.ndarray  # sup-norm residual per sweep, length == iterations
    certified_error: float  # a-posteriori bound: residual * gamma / (1 - gamma)


@njit(cache=True)
def _operator_sweep(transitions, rewards, gamma, d):
    n, m = rewards.shape
    out = np.zeros((n, n), dtype=np.float64)
    for s1 in range(n):
        for s2 in range(s1 + 1, n):
            best = 0.0
            for a in range(m):
                gap = abs(rewards[s1, a] - rewards[s2, a])
                w = w1_value(d, transitions[s1, a], transitions[s2, a])
                val = gap + gamma * w
                if val > best:
                    best = val
            out[s1, s2] = best
            out[s2, s1] = best
    return out


def _as_distance_array(d) -> np.ndarray:
    if isinstance(d, PseudoMetricMatrix):
        return d.d
    return np.ascontiguousarray(d, dtype=np.float64)


def apply_operator(m: FiniteMdp, d) -> PseudoMetricMatrix:
    """One application of K to a candidate distance matrix.

    Every entry is an exact small transport solve; the result is symmetric
    with zero diagonal by construction.
    """
    a = _as_distance_array(d)
    if a.shape != (m.n_states, m.n_states):
        raise ValueError(
            f"distance matrix shape {a.shape} does not match {m.n_states} states"
        )
    out = _operator_sweep(m.transitions, m.rewards, m.gamma, a)
    return PseudoMetricMatrix(out)


def _iteration_cap(gamma: float, tolerance: float) -> int:
    # 10x the geometric-decay estimate of the sweeps needed; only an
    # implementation-bug guard, never a user-facing limit.
    est = math.log(tolerance) / math.log(gamma) if 0 < tolerance < 1 else 1.0
    return max(20, int(10 * math.ceil(est)))


def solve_metric(m: FiniteMdp, tolerance: float = DEFAULT_TOLERANCE) -> MetricRun:
    """Picard-iterate K from the zero matrix until the residual drops.

    Args:
        m: the MDP.
        tolerance: sup-norm residual at which iteration stops.

    Returns:
        MetricRun whose `final` matrix is within
        tolerance * gamma / (1 - gamma) of the true fixed point.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    cap = _iteration_cap(m.gamma, tolerance)
    d = np.zeros((m.n_states, m.n_states))
    residuals = []
    for it in range(1, cap + 1):
        nd = _operator_sweep(m.transitions, m.rewards, m.gamma, d)
        res = float(np.max(np.abs(nd - d))) if d.size else 0.0
        residuals.append(res)
        d = nd
        if res <= tolerance:
            return MetricRun(
                final=PseudoMetricMatrix(d),
                iterations=it,
                residuals=np.asarray(residuals),
                certified_error=res * m.gamma / (1.0 - m.gamma),
            )
    raise RuntimeError(
        f"metric iteration failed to reach {tolerance:g} in {cap} sweeps; "
        "the operator should contract at rate gamma - this is a bug"
    )


def floyd_warshall_closure(a) -> np.ndarray:
    """Min-plus shortest-path closure; turns a symmetric nonnegative matrix
    with zero diagonal into a pseudo-metric."""
    d = np.array(a, dtype=np.float64, copy=True)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"need a square matrix, got shape {d.shape}")
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)
    return d


def random_pseudometric(n: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Random pseudo-metric: uniform symmetric matrix pushed through the
    shortest-path closure. Used by contraction probes and tests."""
    x = rng.uniform(0.0, scale, (n, n))
    x = np.triu(x, 1)
    x = x + x.T
    return floyd_warshall_closure(x)


def residual_rate(residuals) -> float:
    """Geometric decay rate fitted to a residual sequence.

    Uses the prefix of residuals above 1e-7 * residuals[0] (the tail mixes
    float noise into ratios) and returns the per-sweep geometric mean
    (r_w / r_0)^(1/w). Returns 0.0 when convergence is immediate.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if r.size == 0 or r[0] <= 0.0:
        return 0.0
    floor = r[0] * 1e-7
    w = 1
    while w < r.size and r[w] > 0.0 and r[w] >= floor:
        w += 1
    if w < 2:
        return 0.0
    return float((r[w - 1] / r[0]) ** (1.0 / (w - 1)))


@dataclass(frozen=True)
class ContractionEstimate:
    """Two independent empirical views of the operator's contraction factor.

    pair_ratio_max: max over sampled pseudo-metric pairs (d1, d2) of
        ||K(d1) - K(d2)||_inf / ||d1 - d2||_inf; bounded by gamma.
    residual_rate: geometric decay rate fitted to a Picard residual run.
    Both must stay at or below gamma; they are kept separate because they
    fail in different ways and cross-check each other.
    """

    pair_ratio_max: float
    residual_rate: float
    gamma: float


def estimate_contraction(
    m: FiniteMdp,
    trials: int = 10,
    seed: int = 0,
    run: MetricRun | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
) -> ContractionEstimate:
    """Measure the contraction factor of K on random pseudo-metric pairs and
    from the decay of a Picard run (reused if the caller already has one)."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if run is None:
        run = solve_metric(m, tolerance)
    rate = residual_rate(run.residuals)

    rng = np.random.default_rng(seed)
    scale = 2.0 * m.r_max / (1.0 - m.gamma)
    if scale <= 0.0:
        scale = 1.0
    best = 0.0
    n = m.n_states
    for _ in range(trials):
        d1 = random_pseudometric(n, scale, rng)
        d2 = random_pseudometric(n, scale, rng)
        den = float(np.max(np.abs(d1 - d2)))
        if den <= 0.0:
            continue
        k1 = _operator_sweep(m.transitions, m.rewards, m.gamma, d1)
        k2 = _operator_sweep(m.transitions, m.rewards, m.gamma, d2)
        num = float(np.max(np.abs(k1 - k2)))
        ratio = num / den
        if ratio > best:
            best = ratio
    return ContractionEstimate(pair_ratio_max=best, residual_rate=rate, gamma=m.gamma)


def metric_to_csv(pm: PseudoMetricMatrix, path) -> None:
    """n on the first line, then n comma-separated rows (%.17g round-trips
    float64 exactly, keeping files byte-stable)."""
    with open(path, "w") as fh:
        fh.write(f"{pm.n}\n")
        for row in pm.d:
            fh.write(",".join("%.17g" % x for x in row))
            fh.write("\n")


def metric_from_csv(path) -> PseudoMetricMatrix:
    with open(path) as fh:
        n = int(fh.readline())
        rows = [[float(x) for x in fh.readline().split(",")] for _ in range(n)]
    a = np.asarray(rows)
    if a.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got shape {a.shape}")
    return PseudoMetricMatrix(a)


def metric_to_json(pm: PseudoMetricMatrix) -> dict:
    return {"n": pm.n, "d": pm.d.tolist()}


def residuals_to_csv(run: MetricRun, path) -> None:
    with open(path, "w") as fh:
        fh.write("sweep,residual\n")
        for i, r in enumerate(run.residuals, start=1):
            fh.write("%d,%.17g\n" % (i, r))
