"""Quantitative formulas over MDP states and their metric probes.

Formulas denote vectors of reals indexed by state. The fragment is built so
that every connective except binary subtraction is non-expansive with
respect to the behavioral metric: |f(s1) - f(s2)| <= d(s1, s2) for formulas
from the safe sub-grammar, which is what `soundness_probe` samples.

Syntax (s-expression serialization in brackets):

    RationalConst(q)        q or p/q         constant vector
    Var(name)               name             bound by nu
    Sup(items)              (sup a b ...)    pointwise max, n-ary
    Inf(items)              (inf a b ...)    pointwise min, n-ary
    Negate(a)               (neg a)
    Abs(a)                  (abs a)
    Shift(a, q)             (+ a q)          add a rational constant
    Scale(a, q)             (* q a)          scale by |q| <= 1
    Max2(a, b)              (max a b)
    Min2(a, b)              (min a b)
    Subtract(a, b)          (- a b)
    RewardMod(k)            (reward k)       s -> R(s, k)
    TransMod(k, a)          (trans k a)      s -> gamma * E_{t ~ P(s,k)} a(t)
    GreatestFix(x, a)       (nu x a)         greatest fixed point in x

GreatestFix requires x to occur positively in the body: never under a
Negate and never in the right argument of a Subtract. Evaluation iterates
from the constant upper bound r_max / (1 - gamma) downwards to tolerance
1e-9.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .mdp import FiniteMdp
from .metric import MetricRun, _operator_sweep, solve_metric

# Fixed-point iteration tolerance (sup norm).
FIX_TOL = 1e-9


@dataclass(frozen=True)
class RationalConst:
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Sup:
    items: tuple

    def __post_init__(self):
        items = tuple(self.items)
        if not items:
            raise ValueError("sup needs at least one operand")
        object.__setattr__(self, "items", items)


@dataclass(frozen=True)
class Inf:
    items: tuple

    def __post_init__(self):
        items = tuple(self.items)
        if not items:
            raise ValueError("inf needs at least one operand")
        object.__setattr__(self, "items", items)


@dataclass(frozen=True)
class Negate:
    child: "Formula"


@dataclass(frozen=True)
class Abs:
    child: "Formula"


@dataclass(frozen=True)
class Shift:
    child: "Formula"
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "offset", Fraction(self.offset))


@dataclass(frozen=True)
class Scale:
    child: "Formula"
    factor: Fraction

    def __post_init__(self):
        f = Fraction(self.factor)
        if abs(f) > 1:
            raise ValueError(f"scale factor must satisfy |c| <= 1, got {f}")
        object.__setattr__(self, "factor", f)


@dataclass(frozen=True)
class Max2:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Min2:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Subtract:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class RewardMod:
    action: int

    def __post_init__(self):
        if self.action < 0:
            raise ValueError(f"action index must be >= 0, got {self.action}")


@dataclass(frozen=True)
class TransMod:
    action: int
    child: "Formula"

    def __post_init__(self):
        if self.action < 0:
            raise ValueError(f"action index must be >= 0, got {self.action}")


@dataclass(frozen=True)
class GreatestFix:
    var: str
    body: "Formula"


Formula = Union[
    RationalConst, Var, Sup, Inf, Negate, Abs, Shift, Scale,
    Max2, Min2, Subtract, RewardMod, TransMod, GreatestFix,
]


def _children(f: Formula) -> tuple:
    match f:
        case Sup(items) | Inf(items):
            return items
        case Negate(c) | Abs(c):
            return (c,)
        case Shift(c, _) | Scale(c, _):
            return (c,)
        case Max2(l, r) | Min2(l, r) | Subtract(l, r):
            return (l, r)
        case TransMod(_, c):
            return (c,)
        case GreatestFix(_, b):
            return (b,)
        case _:
            return ()


def occurs_free(f: Formula, name: str) -> bool:
    """Does `name` occur free (not shadowed by an inner nu-binder)?"""
    match f:
        case Var(n):
            return n == name
        case GreatestFix(v, body):
            return v != name and occurs_free(body, name)
        case _:
            return any(occurs_free(c, name) for c in _children(f))


def check_positive(body: Formula, name: str) -> None:
    """Reject bodies where `name` occurs under Negate or as the right
    argument of Subtract; monotonicity of the fixpoint map needs this."""
    match body:
        case Negate(c):
            if occurs_free(c, name):
                raise ValueError(f"fixpoint variable {name!r} occurs under a negation")
            check_positive(c, name)
        case Subtract(l, r):
            if occurs_free(r, name):
                raise ValueError(
                    f"fixpoint variable {name!r} occurs on the right of a subtraction"
                )
            check_positive(l, name)
            check_positive(r, name)
        case GreatestFix(v, inner):
            if v != name:
                check_positive(inner, name)
        case _:
            for c in _children(body):
                check_positive(c, name)


def _fix_iteration_cap(gamma: float) -> int:
    return max(200, int(20 * math.ceil(math.log(FIX_TOL) / math.log(gamma))))


def eval_formula(m: FiniteMdp, f: Formula, valuation: dict | None = None) -> np.ndarray:
    """Evaluate a formula to its per-state value vector.

    valuation maps free variable names to vectors of shape (n_states,).
    Raises ValueError for unbound variables, out-of-range modality actions,
    or a non-positive fixpoint body.
    """
    n = m.n_states
    env = {}
    if valuation:
        for k, v in valuation.items():
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError(f"valuation for {k!r} must have shape ({n},), got {arr.shape}")
            env[k] = arr
    return _eval(m, f, env)


def _eval(m: FiniteMdp, f: Formula, env: dict) -> np.ndarray:
    n = m.n_states
    match f:
        case RationalConst(q):
            return np.full(n, float(q))
        case Var(name):
            if name not in env:
                raise ValueError(f"unbound variable {name!r}")
            return env[name]
        case Sup(items):
            return np.maximum.reduce([_eval(m, c, env) for c in items])
        case Inf(items):
            return np.minimum.reduce([_eval(m, c, env) for c in items])
        case Negate(c):
            return -_eval(m, c, env)
        case Abs(c):
            return np.abs(_eval(m, c, env))
        case Shift(c, offset):
            return _eval(m, c, env) + float(offset)
        case Scale(c, factor):
            return float(factor) * _eval(m, c, env)
        case Max2(l, r):
            return np.maximum(_eval(m, l, env), _eval(m, r, env))
        case Min2(l, r):
            return np.minimum(_eval(m, l, env), _eval(m, r, env))
        case Subtract(l, r):
            return _eval(m, l, env) - _eval(m, r, env)
        case RewardMod(a):
            if a >= m.n_actions:
                raise ValueError(f"action {a} out of range for {m.n_actions} actions")
            return m.rewards[:, a].copy()
        case TransMod(a, c):
            if a >= m.n_actions:
                raise ValueError(f"action {a} out of range for {m.n_actions} actions")
            return m.gamma * (m.transitions[:, a, :] @ _eval(m, c, env))
        case GreatestFix(var, body):
            check_positive(body, var)
            v = np.full(n, m.r_max / (1.0 - m.gamma))
            cap = _fix_iteration_cap(m.gamma)
            inner = dict(env)
            for _ in range(cap):
                inner[var] = v
                nv = _eval(m, body, inner)
                res = float(np.max(np.abs(nv - v)))
                v = nv
                if res <= FIX_TOL:
                    return v
            raise RuntimeError(
                f"fixpoint iteration did not settle within {cap} rounds; "
                "body may not be contractive"
            )
        case _:
            raise TypeError(f"not a formula node: {f!r}")


# --- s-expression serialization -------------------------------------------


def format_formula(f: Formula) -> str:
    match f:
        case RationalConst(q):
            return _format_rational(q)
        case Var(name):
            return name
        case Sup(items):
            return "(sup " + " ".join(format_formula(c) for c in items) + ")"
        case Inf(items):
            return "(inf " + " ".join(format_formula(c) for c in items) + ")"
        case Negate(c):
            return f"(neg {format_formula(c)})"
        case Abs(c):
            return f"(abs {format_formula(c)})"
        case Shift(c, offset):
            return f"(+ {format_formula(c)} {_format_rational(offset)})"
        case Scale(c, factor):
            return f"(* {_format_rational(factor)} {format_formula(c)})"
        case Max2(l, r):
            return f"(max {format_formula(l)} {format_formula(r)})"
        case Min2(l, r):
            return f"(min {format_formula(l)} {format_formula(r)})"
        case Subtract(l, r):
            return f"(- {format_formula(l)} {format_formula(r)})"
        case RewardMod(a):
            return f"(reward {a})"
        case TransMod(a, c):
            return f"(trans {a} {format_formula(c)})"
        case GreatestFix(var, body):
            return f"(nu {var} {format_formula(body)})"
        case _:
            raise TypeError(f"not a formula node: {f!r}")


def _format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


class FormulaSyntaxError(ValueError):
    """Raised when an s-expression cannot be parsed as a formula."""


def _tokenize(text: str) -> list:
    return text.replace("(", " ( ").replace(")", " ) ").split()


_RESERVED = {"sup", "inf", "neg", "abs", "max", "min", "reward", "trans", "nu", "+", "*", "-", "(", ")"}


def _is_rational_token(tok: str) -> bool:
    body = tok[1:] if tok.startswith("-") else tok
    if "/" in body:
        num, _, den = body.partition("/")
        return num.isdigit() and den.isdigit()
    return body.isdigit()


def _is_name(tok: str) -> bool:
    if tok in _RESERVED or not (tok[0].isalpha() or tok[0] == "_"):
        return False
    return all(ch.isalnum() or ch == "_" for ch in tok)


def parse_formula(text: str) -> Formula:
    """Parse the s-expression syntax produced by `format_formula`."""
    tokens = _tokenize(text)
    if not tokens:
        raise FormulaSyntaxError("empty input")
    f, rest = _parse(tokens, 0)
    if rest != len(tokens):
        raise FormulaSyntaxError(f"trailing tokens: {' '.join(tokens[rest:])}")
    return f


def _parse(tokens: list, pos: int):
    if pos >= len(tokens):
        raise FormulaSyntaxError("unexpected end of input")
    tok = tokens[pos]
    if tok == ")":
        raise FormulaSyntaxError("unexpected ')'")
    if tok != "(":
        if _is_rational_token(tok):
            return RationalConst(Fraction(tok)), pos + 1
        if _is_name(tok):
            return Var(tok), pos + 1
        raise FormulaSyntaxError(f"cannot read token {tok!r}")
    # compound form
    if pos + 1 >= len(tokens):
        raise FormulaSyntaxError("unterminated '('")
    head = tokens[pos + 1]
    pos += 2

    def finish(node, pos):
        if pos >= len(tokens) or tokens[pos] != ")":
            raise FormulaSyntaxError(f"expected ')' to close ({head} ...)")
        return node, pos + 1

    if head in ("sup", "inf"):
        items = []
        while pos < len(tokens) and tokens[pos] != ")":
            item, pos = _parse(tokens, pos)
            items.append(item)
        if not items:
            raise FormulaSyntaxError(f"({head}) needs at least one operand")
        return finish(Sup(tuple(items)) if head == "sup" else Inf(tuple(items)), pos)
    if head in ("neg", "abs"):
        child, pos = _parse(tokens, pos)
        return finish(Negate(child) if head == "neg" else Abs(child), pos)
    if head == "+":
        child, pos = _parse(tokens, pos)
        offset, pos = _parse_rational(tokens, pos, "shift offset")
        return finish(Shift(child, offset), pos)
    if head == "*":
        factor, pos = _parse_rational(tokens, pos, "scale factor")
        child, pos = _parse(tokens, pos)
        try:
            node = Scale(child, factor)
        except ValueError as exc:
            raise FormulaSyntaxError(str(exc)) from exc
        return finish(node, pos)
    if head in ("max", "min", "-"):
        left, pos = _parse(tokens, pos)
        right, pos = _parse(tokens, pos)
        node = {"max": Max2, "min": Min2, "-": Subtract}[head](left, right)
        return finish(node, pos)
    if head == "reward":
        action, pos = _parse_action(tokens, pos)
        return finish(RewardMod(action), pos)
    if head == "trans":
        action, pos = _parse_action(tokens, pos)
        child, pos = _parse(tokens, pos)
        return finish(TransMod(action, child), pos)
    if head == "nu":
        if pos >= len(tokens) or not _is_name(tokens[pos]):
            raise FormulaSyntaxError("(nu ...) needs a variable name")
        var = tokens[pos]
        body, pos = _parse(tokens, pos + 1)
        return finish(GreatestFix(var, body), pos)
    raise FormulaSyntaxError(f"unknown form {head!r}")


def _parse_rational(tokens, pos, what):
    if pos >= len(tokens) or not _is_rational_token(tokens[pos]):
        got = tokens[pos] if pos < len(tokens) else "<eof>"
        raise FormulaSyntaxError(f"expected a rational {what}, got {got!r}")
    return Fraction(tokens[pos]), pos + 1


def _parse_action(tokens, pos):
    if pos >= len(tokens) or not tokens[pos].isdigit():
        got = tokens[pos] if pos < len(tokens) else "<eof>"
        raise FormulaSyntaxError(f"expected an action index, got {got!r}")
    return int(tokens[pos]), pos + 1


# --- metric probes ---------------------------------------------------------


def mimic_deviation(m: FiniteMdp, s1: int, depth: int) -> np.ndarray:
    """Row s1 of the depth-fold operator iterate K^depth(0).

    Entry s2 is the largest behavioral deviation witnessable between s1 and
    s2 within `depth` steps of lookahead; it increases to d_M(s1, s2) as
    depth grows, at geometric speed gamma^depth.
    """
    if not (0 <= s1 < m.n_states):
        raise ValueError(f"state {s1} out of range for {m.n_states} states")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    d = np.zeros((m.n_states, m.n_states))
    for _ in range(depth):
        d = _operator_sweep(m.transitions, m.rewards, m.gamma, d)
    return d[s1].copy()


@dataclass(frozen=True)
class SoundnessReport:
    """Largest violation of |f(s1) - f(s2)| <= d(s1, s2) over sampled safe
    formulas; max_slack <= tolerance means every formula respected the
    metric."""

    count: int
    max_slack: float
    worst_formula: str
    ok: bool


def _random_safe_formula(rng: np.random.Generator, m: FiniteMdp, depth: int) -> Formula:
    """Sample from the non-expansive sub-grammar.

    Leaves are rational constants or |R(., a) - c|; combinators are max/min,
    scaling by |c| <= 1, constant shifts, and the transition modality. No
    formula-formula subtraction: that one is only 2-Lipschitz.
    """
    def rational(lo: float, hi: float) -> Fraction:
        den = int(rng.integers(1, 9))
        lo_n = math.ceil(lo * den)
        hi_n = math.floor(hi * den)
        return Fraction(int(rng.integers(lo_n, hi_n + 1)), den)

    r = m.r_max if m.r_max > 0 else 1.0

    def leaf() -> Formula:
        if rng.random() < 0.4:
            return RationalConst(rational(-r, r))
        a = int(rng.integers(m.n_actions))
        return Abs(Subtract(RewardMod(a), RationalConst(rational(-r, r))))

    def gen(d: int) -> Formula:
        if d <= 0 or rng.random() < 0.25:
            return leaf()
        roll = rng.random()
        if roll < 0.25:
            return Max2(gen(d - 1), gen(d - 1))
        if roll < 0.5:
            return Min2(gen(d - 1), gen(d - 1))
        if roll < 0.65:
            return Scale(gen(d - 1), rational(-1.0, 1.0))
        if roll < 0.8:
            return Shift(gen(d - 1), rational(-r, r))
        return TransMod(int(rng.integers(m.n_actions)), gen(d - 1))

    return gen(depth)


def soundness_probe(
    m: FiniteMdp,
    seed: int,
    count: int = 100,
    depth: int = 6,
    run: MetricRun | None = None,
    tolerance: float = 1e-7,
) -> SoundnessReport:
    """Sample `count` safe formulas and check them against the metric.

    Every formula from the safe grammar is non-expansive, so
    |f(s1) - f(s2)| - d_M(s1, s2) must stay <= tolerance for all pairs.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if run is None:
        run = solve_metric(m)
    d = run.final.d
    rng = np.random.default_rng(seed)
    max_slack = -math.inf
    worst = ""
    for _ in range(count):
        f = _random_safe_formula(rng, m, depth)
        vals = eval_formula(m, f)
        dev = np.abs(vals[:, None] - vals[None, :])
        slack = float(np.max(dev - d))
        if slack > max_slack:
            max_slack = slack
            worst = format_formula(f)
    return SoundnessReport(
        count=count,
        max_slack=max_slack,
        worst_formula=worst,
        ok=max_slack <= tolerance,
    )


def completeness_probe(
    m: FiniteMdp, s1: int, s2: int, depth: int, run: MetricRun | None = None
) -> tuple:
    """Lower-bound d_M(s1, s2) by depth-limited lookahead.

    Returns (lower_bound, gap) with gap = d_M(s1, s2) - lower_bound; the gap
    lies in [0, gamma^depth * diameter] up to solver tolerance.
    """
    if not (0 <= s2 < m.n_states):
        raise ValueError(f"state {s2} out of range for {m.n_states} states")
    lower = float(abs(mimic_deviation(m, s1, depth)[s2]))
    if run is None:
        run = solve_metric(m)
    gap = float(run.final.d[s1, s2]) - lower
    return lower, gap
