from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_corpus
from mdpmetric import (
    FormulaSyntaxError,
    completeness_probe,
    eval_formula,
    format_formula,
    make_chain_example,
    make_random_mdp,
    mimic_deviation,
    parse_formula,
    solve_metric,
    soundness_probe,
)
from mdpmetric.logic import (
    Abs,
    GreatestFix,
    Max2,
    RationalConst,
    RewardMod,
    Scale,
    Shift,
    Subtract,
    Sup,
    TransMod,
    Var,
)


def test_parse_basic_forms():
    f = parse_formula("(reward 0)")
    assert f == RewardMod(0)
    f = parse_formula("(* 1/2 (reward 1))")
    assert f == Scale(RewardMod(1), Fraction(1, 2))
    f = parse_formula("(+ (reward 0) -3/4)")
    assert f == Shift(RewardMod(0), Fraction(-3, 4))
    f = parse_formula("(nu x (max (reward 0) (trans 0 x)))")
    assert f == GreatestFix("x", Max2(RewardMod(0), TransMod(0, Var("x"))))
    f = parse_formula("(sup (reward 0) (reward 1) 2)")
    assert f == Sup((RewardMod(0), RewardMod(1), RationalConst(Fraction(2))))


def test_parse_rejects_malformed_input():
    for text in (
        "",
        "(",
        ")",
        "(reward)",
        "(reward x)",
        "(bogus 1)",
        "(max (reward 0))",
        "(reward 0) junk",
        "(* 3/2 (reward 0))",  # scale factor above 1
        "(nu (reward 0))",
        "(+ (reward 0) one)",
    ):
        with pytest.raises(FormulaSyntaxError):
            parse_formula(text)


def test_scale_constructor_enforces_bound():
    with pytest.raises(ValueError):
        Scale(RewardMod(0), Fraction(5, 4))
    Scale(RewardMod(0), Fraction(-1))  # |c| == 1 allowed


def _random_formula(rng, depth, n_actions):
    # general fragment exerciser for the round-trip test (soundness not needed)
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.5:
            return RationalConst(Fraction(int(rng.integers(-8, 9)), int(rng.integers(1, 9))))
        return RewardMod(int(rng.integers(0, n_actions)))
    pick = rng.integers(0, 6)
    sub = _random_formula(rng, depth - 1, n_actions)
    if pick == 0:
        return Abs(sub)
    if pick == 1:
        return Shift(sub, Fraction(int(rng.integers(-4, 5)), int(rng.integers(1, 5))))
    if pick == 2:
        return Scale(sub, Fraction(1, int(rng.integers(1, 5))))
    if pick == 3:
        return Max2(sub, _random_formula(rng, depth - 1, n_actions))
    if pick == 4:
        return Subtract(sub, _random_formula(rng, depth - 1, n_actions))
    return TransMod(int(rng.integers(0, n_actions)), sub)


@given(st.integers(0, 2000))
@settings(max_examples=60)
def test_format_parse_roundtrip(seed):
    rng = np.random.default_rng(seed)
    f = _random_formula(rng, int(rng.integers(0, 5)), 3)
    assert parse_formula(format_formula(f)) == f


def test_eval_reward_and_transition_modalities():
    m = make_chain_example(0.9)
    np.testing.assert_allclose(eval_formula(m, parse_formula("(reward 0)")), [0, 1, 0])
    # discounted expected next value of (reward 0)
    np.testing.assert_allclose(
        eval_formula(m, parse_formula("(trans 0 (reward 0))")), [0.9, 0.0, 0.0]
    )
    np.testing.assert_allclose(
        eval_formula(m, parse_formula("(+ (reward 0) 1/2)")), [0.5, 1.5, 0.5]
    )
    np.testing.assert_allclose(
        eval_formula(m, parse_formula("(* -1/2 (reward 0))")), [0.0, -0.5, 0.0]
    )
    np.testing.assert_allclose(
        eval_formula(m, parse_formula("(abs (+ (reward 0) -1/2))")), [0.5, 0.5, 0.5]
    )
    np.testing.assert_allclose(
        eval_formula(m, parse_formula("(min (reward 0) 1/4)")), [0.0, 0.25, 0.0]
    )
    np.testing.assert_allclose(
        eval_formula(m, parse_formula("(sup (reward 0) (neg (reward 0)) 1/8)")),
        [0.125, 1.0, 0.125],
    )


def test_eval_greatest_fixpoint():
    m = make_chain_example(0.9)
    vals = eval_formula(m, parse_formula("(nu x (max (reward 0) (trans 0 x)))"))
    np.testing.assert_allclose(vals, [0.9, 1.0, 0.0], atol=2e-8)
    # pure discounted self-reference decays to zero
    vals0 = eval_formula(m, parse_formula("(nu x (trans 0 x))"))
    np.testing.assert_allclose(vals0, [0.0, 0.0, 0.0], atol=2e-8)


def test_fixpoint_positivity_enforced():
    m = make_chain_example(0.9)
    with pytest.raises(ValueError):
        eval_formula(m, parse_formula("(nu x (neg x))"))
    with pytest.raises(ValueError):
        eval_formula(m, parse_formula("(nu x (- (reward 0) x))"))
    # shadowed occurrences are fine: the inner nu rebinds x
    inner_shadow = parse_formula("(nu x (trans 0 (nu x (trans 0 x))))")
    np.testing.assert_allclose(eval_formula(m, inner_shadow), 0.0, atol=2e-8)


def test_unbound_variable_rejected():
    m = make_chain_example(0.9)
    with pytest.raises(ValueError):
        eval_formula(m, Var("y"))
    vals = eval_formula(m, Var("y"), valuation={"y": np.array([1.0, 2.0, 3.0])})
    np.testing.assert_allclose(vals, [1, 2, 3])


def test_action_bounds_checked():
    m = make_chain_example(0.9)
    with pytest.raises(ValueError):
        eval_formula(m, parse_formula("(reward 1)"))
    with pytest.raises(ValueError):
        eval_formula(m, parse_formula("(trans 2 (reward 0))"))


def test_mimic_deviation_depth_sweep():
    m = make_chain_example(0.9)
    # depth 1: only the immediate reward gap is visible
    np.testing.assert_allclose(mimic_deviation(m, 0, 1), [0.0, 1.0, 0.0], atol=1e-12)
    # deep enough lookahead recovers the metric row exactly (chain converges
    # in three sweeps)
    np.testing.assert_allclose(mimic_deviation(m, 0, 5), [0.0, 1.9, 0.9], atol=1e-12)
    assert mimic_deviation(m, 1, 0).tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        mimic_deviation(m, 5, 1)
    with pytest.raises(ValueError):
        mimic_deviation(m, 0, -1)


def test_mimic_deviation_monotone_in_depth():
    m = make_random_mdp(6, 2, 0.9, seed=3)
    rows = [mimic_deviation(m, 2, k) for k in (0, 1, 2, 4, 8, 16)]
    for lo, hi in zip(rows, rows[1:]):
        assert np.all(hi >= lo - 1e-12)


def test_completeness_probe_band():
    m = make_chain_example(0.9)
    run = solve_metric(m, 1e-9)
    dmax = run.final.d.max()
    for k in (1, 5, 10, 20):
        lower, gap = completeness_probe(m, 0, 1, k, run=run)
        assert -1e-9 <= gap <= 0.9**k * dmax + 1e-7
        assert lower <= run.final.d[0, 1] + 1e-9


def test_soundness_probe_small_run():
    for m in make_corpus(4, seed=77):
        rep = soundness_probe(m, seed=1, count=60, depth=5)
        assert rep.ok, rep.worst_formula
        assert rep.count == 60
        assert rep.max_slack <= 1e-7


def test_soundness_probe_deterministic():
    m = make_random_mdp(5, 2, 0.9, seed=9)
    a = soundness_probe(m, seed=4, count=40, depth=5)
    b = soundness_probe(m, seed=4, count=40, depth=5)
    assert a == b
