"""Finite discounted MDPs: container, validation, generators, serialization.

Conventions used across the package:

- ``transitions`` has shape ``(n_states, n_actions, n_states)`` with
  ``transitions[s, a, t] = P(t | s, a)``; every ``(s, a)`` row is a
  probability vector.
- ``rewards`` has shape ``(n_states, n_actions)``.
- ``gamma`` lies strictly inside ``(0, 1)``.

Arrays are coerced to float64 and frozen (read-only views) at construction,
so an ``FiniteMdp`` can be shared freely between threads and cached solvers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Tolerance for "rows sum to one" when validating transition tensors.
ROW_SUM_TOL = 1e-9
# Anything more negative than this counts as a genuine negative probability
# rather than float noise.
NEGATIVE_PROB_TOL = 1e-12


class MdpFormatError(ValueError):
    """Raised when a serialized MDP document is malformed or invalid."""


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Immutable finite MDP with dense transition and reward tensors.

    Attributes
    ----------
    transitions:
        float64 tensor of shape ``(n_states, n_actions, n_states)``.
    rewards:
        float64 matrix of shape ``(n_states, n_actions)``.
    gamma:
        Discount factor, strictly inside ``(0, 1)``.
    metadata:
        Free-form provenance dict (generator name, seed, grid geometry...).
        Not part of the mathematical identity of the MDP.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.transitions, dtype=np.float64)
        r = np.asarray(self.rewards, dtype=np.float64)
        if t.ndim != 3 or r.ndim != 2:
            raise ValueError(
                f"transitions must be 3-d and rewards 2-d, got {t.ndim}-d and {r.ndim}-d"
            )
        n, m = r.shape
        if t.shape != (n, m, n):
            raise ValueError(
                f"shape mismatch: rewards {r.shape} implies transitions {(n, m, n)}, got {t.shape}"
            )
        if n < 1 or m < 1:
            raise ValueError("need at least one state and one action")
        g = float(self.gamma)
        if not (0.0 < g < 1.0):
            raise ValueError(f"gamma must lie strictly in (0, 1), got {g}")
        t = t.copy()
        r = r.copy()
        t.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", t)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "gamma", g)

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    @property
    def r_max(self) -> float:
        """Largest absolute reward; enters every diameter bound 2*r_max/(1-gamma)."""
        return float(np.max(np.abs(self.rewards)))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_mdp`.

    ``violations`` holds ``(kind, location, magnitude)`` triples, one per
    offending entry, e.g. ``("row-sum", (2, 0), 0.1)`` for a (s=2, a=0) row
    whose mass is off by 0.1.
    """

    ok: bool
    violations: tuple

    def __bool__(self) -> bool:
        return self.ok


def validate_mdp(m: FiniteMdp) -> ValidationReport:
    """Check stochasticity, sign and finiteness of an MDP's tensors.

    Shape consistency and the gamma range are already enforced by the
    ``FiniteMdp`` constructor; this reports every numerical violation in the
    tensors, so a loaded or hand-built instance can be audited in one pass.
    """
    bad = []
    t, r = m.transitions, m.rewards

    finite_t = np.isfinite(t)
    for s, a, sp in zip(*np.nonzero(~finite_t)):
        bad.append(("non-finite-prob", (int(s), int(a), int(sp)), float("inf")))
    finite_r = np.isfinite(r)
    for s, a in zip(*np.nonzero(~finite_r)):
        bad.append(("non-finite-reward", (int(s), int(a)), float("inf")))

    neg = (t < -NEGATIVE_PROB_TOL) & finite_t
    for s, a, sp in zip(*np.nonzero(neg)):
        bad.append(("negative-prob", (int(s), int(a), int(sp)), float(-t[s, a, sp])))

    sums = np.where(finite_t, t, 0.0).sum(axis=2)
    off = np.abs(sums - 1.0)
    for s, a in zip(*np.nonzero(off > ROW_SUM_TOL)):
        bad.append(("row-sum", (int(s), int(a)), float(off[s, a])))

    if not (0.0 < m.gamma < 1.0):  # unreachable via constructor, kept for loaders
        bad.append(("gamma-range", (), float(m.gamma)))

    return ValidationReport(ok=not bad, violations=tuple(bad))


def make_chain_example(gamma: float = 0.9) -> FiniteMdp:
    """Three-state deterministic chain s1 -> s2 -> s3 -> s3, single action.

    Rewards are (0, 1, 0). The behavioral metric of this MDP is known in
    closed form (d(s1,s2) = 1 + gamma, d(s2,s3) = 1, d(s1,s3) = gamma) which
    makes it the standard smoke-test fixture throughout the test-suite.
    """
    transitions = np.zeros((3, 1, 3))
    transitions[0, 0, 1] = 1.0
    transitions[1, 0, 2] = 1.0
    transitions[2, 0, 2] = 1.0
    rewards = np.array([[0.0], [1.0], [0.0]])
    return FiniteMdp(transitions, rewards, gamma, metadata={"generator": "chain-example"})


@dataclass(frozen=True)
class GridWorldSpec:
    """Geometry and noise parameters of the square grid-world generator.

    Attributes
    ----------
    side:
        Grid side length; the MDP has ``side * side`` states, indexed
        row-major (state = row * side + col).
    slip:
        Total probability mass diverted from the intended move and spread
        uniformly over the von-Neumann neighbours that actually exist.
    gamma:
        Discount factor.
    goal:
        Flat index of the rewarding cell. ``None`` means the bottom-right
        corner ``side * side - 1``.
    goal_reward:
        Reward collected by every action taken in the goal cell.
    """

    side: int
    slip: float = 0.07
    gamma: float = 0.95
    goal: int | None = None
    goal_reward: float = 1.0

    def __post_init__(self):
        if self.side < 1:
            raise ValueError(f"side must be >= 1, got {self.side}")
        if not (0.0 <= self.slip <= 1.0):
            raise ValueError(f"slip must lie in [0, 1], got {self.slip}")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must lie strictly in (0, 1), got {self.gamma}")
        if self.goal is not None and not (0 <= self.goal < self.side * self.side):
            raise ValueError(f"goal {self.goal} outside grid of {self.side * self.side} cells")

    @property
    def goal_cell(self) -> int:
        return self.side * self.side - 1 if self.goal is None else self.goal


# Action encoding for grid worlds: displacement per action index.
GRID_ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))  # 0=up 1=down 2=left 3=right


def make_grid_world(spec: GridWorldSpec) -> FiniteMdp:
    """Slippery grid world; deterministic function of its spec.

    Dynamics per cell (r, c) and action a:

    - the intended neighbour receives mass ``1 - slip``; if the move would
      leave the grid the agent stays in place instead,
    - the slip mass is split uniformly over the k existing von-Neumann
      neighbours (k < 4 on edges and corners), ``slip / k`` each.

    Moves into walls and slip mass can land on the same cell, in which case
    the masses add up.
    """
    side = spec.side
    n = side * side
    transitions = np.zeros((n, 4, n))
    rewards = np.zeros((n, 4))
    for r in range(side):
        for c in range(side):
            s = r * side + c
            neighbours = []
            for dr, dc in GRID_ACTIONS:
                rr, cc = r + dr, c + dc
                if 0 <= rr < side and 0 <= cc < side:
                    neighbours.append(rr * side + cc)
            for a, (dr, dc) in enumerate(GRID_ACTIONS):
                rr, cc = r + dr, c + dc
                intended = rr * side + cc if (0 <= rr < side and 0 <= cc < side) else s
                transitions[s, a, intended] += 1.0 - spec.slip
                if neighbours:
                    for t in neighbours:
                        transitions[s, a, t] += spec.slip / len(neighbours)
                else:  # 1x1 grid has no neighbours; all mass stays
                    transitions[s, a, s] += spec.slip
            if s == spec.goal_cell:
                rewards[s, :] = spec.goal_reward
    meta = {
        "generator": "grid-world",
        "side": side,
        "slip": spec.slip,
        "goal": spec.goal_cell,
        "goal_reward": spec.goal_reward,
    }
    return FiniteMdp(transitions, rewards, spec.gamma, metadata=meta)


def make_random_mdp(n_states: int, n_actions: int, gamma: float, seed: int) -> FiniteMdp:
    """Random MDP with Dirichlet(1,...,1) rows and uniform [-1, 1] rewards.

    Sampling is pinned down exactly so independent implementations can
    reproduce instances bit-for-bit from (n_states, n_actions, gamma, seed):

    1. ``rng = numpy.random.default_rng(seed)`` (PCG64),
    2. one draw ``u = rng.random((n, m, n))``, mapped through
       ``e = -log1p(-u)`` (unit exponentials) and normalized per (s, a) row -
       the classic exponential-ratio construction of a flat Dirichlet,
    3. then ``rewards = rng.uniform(-1.0, 1.0, (n, m))``.

    Transitions are consumed from the stream before rewards, rows in
    row-major (s, a) order via the single block draw above.
    """
    rng = np.random.default_rng(seed)
    u = rng.random((n_states, n_actions, n_states))
    e = -np.log1p(-u)
    transitions = e / e.sum(axis=2, keepdims=True)
    rewards = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    meta = {"generator": "random-dirichlet", "seed": seed}
    return FiniteMdp(transitions, rewards, gamma, metadata=meta)


def reindex_actions(m: FiniteMdp, action_map: Sequence[int]) -> FiniteMdp:
    """Rebuild the MDP with action k taking the role of old action ``action_map[k]``.

    ``action_map`` may permute, duplicate or drop actions; entries must be
    valid old action indices. Surjective maps (every old action kept at least
    once) leave the behavioral metric untouched, which the test-suite checks.
    """
    idx = np.asarray(action_map, dtype=np.int64)
    if idx.ndim != 1 or idx.size < 1:
        raise ValueError("action_map must be a non-empty 1-d index sequence")
    if np.any(idx < 0) or np.any(idx >= m.n_actions):
        raise ValueError(f"action_map entries must lie in [0, {m.n_actions}), got {idx}")
    meta = dict(m.metadata)
    meta["reindexed-from"] = [int(i) for i in idx]
    return FiniteMdp(m.transitions[:, idx, :], m.rewards[:, idx], m.gamma, metadata=meta)


def mdp_to_dict(m: FiniteMdp) -> dict:
    return {
        "n_states": m.n_states,
        "n_actions": m.n_actions,
        "gamma": m.gamma,
        "rewards": m.rewards.tolist(),
        "transitions": m.transitions.tolist(),
        "metadata": m.metadata,
    }


def mdp_from_dict(doc: dict) -> FiniteMdp:
    try:
        transitions = np.asarray(doc["transitions"], dtype=np.float64)
        rewards = np.asarray(doc["rewards"], dtype=np.float64)
        gamma = float(doc["gamma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MdpFormatError(f"malformed MDP document: {exc}") from exc
    try:
        m = FiniteMdp(transitions, rewards, gamma, metadata=dict(doc.get("metadata", {})))
    except ValueError as exc:
        raise MdpFormatError(str(exc)) from exc
    if "n_states" in doc and int(doc["n_states"]) != m.n_states:
        raise MdpFormatError(
            f"declared n_states={doc['n_states']} but tensors have {m.n_states}"
        )
    if "n_actions" in doc and int(doc["n_actions"]) != m.n_actions:
        raise MdpFormatError(
            f"declared n_actions={doc['n_actions']} but tensors have {m.n_actions}"
        )
    report = validate_mdp(m)
    if not report.ok:
        head = "; ".join(f"{k} at {loc} (off by {mag:.3g})" for k, loc, mag in report.violations[:5])
        raise MdpFormatError(f"loaded MDP fails validation: {head}")
    return m


def save_mdp(m: FiniteMdp, path) -> None:
    """Write one MDP as a single JSON document (probabilities as decimal doubles)."""
    with open(path, "w") as fh:
        json.dump(mdp_to_dict(m), fh, indent=1)
        fh.write("\n")


def load_mdp(path) -> FiniteMdp:
    """Load and re-validate an MDP written by :func:`save_mdp`."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MdpFormatError(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise MdpFormatError("top-level JSON value must be an object")
    return mdp_from_dict(doc)
