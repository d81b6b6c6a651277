import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_corpus
from mdpmetric import (
    PseudoMetricMatrix,
    apply_operator,
    estimate_contraction,
    floyd_warshall_closure,
    make_chain_example,
    make_random_mdp,
    metric_from_csv,
    metric_to_csv,
    metric_to_json,
    random_pseudometric,
    residual_rate,
    residuals_to_csv,
    solve_metric,
)

CHAIN_D = np.array(
    [
        [0.0, 1.9, 0.9],
        [1.9, 0.0, 1.0],
        [0.9, 1.0, 0.0],
    ]
)


def test_chain_fixed_point_exact():
    run = solve_metric(make_chain_example(0.9), 1e-9)
    np.testing.assert_allclose(run.final.d, CHAIN_D, atol=1e-12)
    assert run.iterations <= 4
    assert run.certified_error <= 1e-9
    # the last sweep leaves the values unchanged, so the residual hits zero
    assert run.residuals[-1] == 0.0


def test_fixed_point_is_fixed():
    m = make_chain_example(0.9)
    run = solve_metric(m, 1e-9)
    again = apply_operator(m, run.final)
    np.testing.assert_allclose(again.d, run.final.d, atol=1e-12)


def _two_state_oracle(m, iters=200):
    """Scalar fixed-point iteration for 2-state MDPs: under a 2-point ground
    metric with d01 = t, W1 reduces to |p1[0] - p2[0]| * t."""
    dr = np.abs(m.rewards[0] - m.rewards[1])
    dp = np.abs(m.transitions[0, :, 0] - m.transitions[1, :, 0])
    t = 0.0
    for _ in range(iters):
        t = float(np.max(dr + m.gamma * dp * t))
    return t


@given(st.integers(0, 10_000), st.sampled_from([0.7, 0.8, 0.9, 0.95]))
@settings(max_examples=40)
def test_two_state_metric_matches_scalar_oracle(seed, gamma):
    m = make_random_mdp(2, 3, gamma, seed)
    run = solve_metric(m, 1e-10)
    assert run.final.d[0, 1] == pytest.approx(_two_state_oracle(m), abs=1e-8)


def test_solved_metrics_satisfy_axioms():
    for m in make_corpus(15, seed=5):
        run = solve_metric(m, 1e-9)
        assert run.final.is_valid(), run.final.validate()


def test_metric_bounded_by_reward_geometric_series():
    for m in make_corpus(10, seed=9):
        run = solve_metric(m, 1e-9)
        bound = 2.0 * m.r_max / (1.0 - m.gamma) + 1e-7
        assert run.final.d.max() <= bound


@given(st.integers(0, 500), st.integers(2, 8))
@settings(max_examples=30)
def test_operator_contracts_random_pairs(seed, n):
    rng = np.random.default_rng(seed)
    m = make_random_mdp(n, 2, 0.9, seed)
    d1 = random_pseudometric(n, 2.0, rng)
    d2 = random_pseudometric(n, 2.0, rng)
    before = np.max(np.abs(d1 - d2))
    after = np.max(np.abs(apply_operator(m, d1).d - apply_operator(m, d2).d))
    assert after <= m.gamma * before + 1e-9


def test_operator_monotone():
    m = make_random_mdp(5, 2, 0.9, seed=4)
    rng = np.random.default_rng(0)
    d1 = random_pseudometric(5, 1.0, rng)
    d2 = d1 + random_pseudometric(5, 1.0, rng)  # sum of pseudometrics dominates d1
    k1 = apply_operator(m, d1).d
    k2 = apply_operator(m, d2).d
    assert np.all(k2 - k1 >= -1e-12)


def test_residuals_monotone_envelope_and_certificate():
    m = make_random_mdp(8, 3, 0.9, seed=11)
    run = solve_metric(m, 1e-9)
    r = np.asarray(run.residuals)
    # stopping rule: iteration ends once the sup-norm residual drops
    assert r[-1] <= 1e-9
    assert run.certified_error == pytest.approx(r[-1] * m.gamma / (1.0 - m.gamma))
    # residuals of a gamma-contraction are bounded by a geometric envelope
    assert np.all(r[1:] <= m.gamma * r[:-1] + 1e-12)
    # the a-posteriori certificate really bounds the distance to the fixed
    # point: compare against a much tighter solve
    tight = solve_metric(m, 1e-13)
    true_err = float(np.max(np.abs(run.final.d - tight.final.d)))
    assert true_err <= run.certified_error + 1e-12


def test_pseudometric_matrix_validation():
    good = PseudoMetricMatrix(CHAIN_D)
    assert good.is_valid()
    assert good.diameter == pytest.approx(1.9)
    with pytest.raises(ValueError):
        PseudoMetricMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))  # asymmetric
    with pytest.raises(ValueError):
        PseudoMetricMatrix(np.full((2, 3), 0.0))  # not square
    bad_triangle = np.array(
        [
            [0.0, 5.0, 1.0],
            [5.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
        ]
    )
    pm = PseudoMetricMatrix(bad_triangle)
    assert not pm.is_valid()
    assert any("triangle" in v for v in pm.validate())
    assert not PseudoMetricMatrix(np.array([[0.0, -1.0], [-1.0, 0.0]])).is_valid()


def test_floyd_warshall_closure_idempotent_and_dominated():
    rng = np.random.default_rng(3)
    raw = rng.random((6, 6)) * 4
    raw = (raw + raw.T) / 2
    np.fill_diagonal(raw, 0.0)
    closed = floyd_warshall_closure(raw)
    assert PseudoMetricMatrix(closed).is_valid()
    np.testing.assert_allclose(floyd_warshall_closure(closed), closed, atol=0)
    assert np.all(closed <= raw + 1e-12)


@given(st.integers(2, 12), st.integers(0, 1000))
@settings(max_examples=30)
def test_random_pseudometric_is_valid(n, seed):
    d = random_pseudometric(n, 3.0, np.random.default_rng(seed))
    assert PseudoMetricMatrix(d).is_valid()


def test_residual_rate_geometric_sequence_exact():
    r = [1.0 * 0.9**k for k in range(30)]
    assert residual_rate(r) == pytest.approx(0.9, abs=1e-12)
    assert residual_rate([1.0]) == 0.0
    assert residual_rate([]) == 0.0
    # noise floor: trailing junk below 1e-7 * r0 must not pollute the fit
    r_noisy = r + [1e-16, 3e-16]
    assert residual_rate(r_noisy) == pytest.approx(0.9, abs=1e-6)


def test_chain_residual_rate_is_gamma():
    run = solve_metric(make_chain_example(0.9), 1e-9)
    assert residual_rate(run.residuals) == pytest.approx(0.9, abs=1e-12)


def test_estimate_contraction_below_gamma():
    m = make_random_mdp(6, 2, 0.9, seed=2)
    est = estimate_contraction(m, trials=8, seed=0)
    assert 0.0 < est.pair_ratio_max <= m.gamma + 1e-9
    assert 0.0 < est.residual_rate <= m.gamma + 1e-6
    assert est.gamma == m.gamma


def test_csv_roundtrip_bit_exact(tmp_path):
    run = solve_metric(make_random_mdp(7, 2, 0.95, seed=6), 1e-9)
    path = tmp_path / "d.csv"
    metric_to_csv(run.final, path)
    back = metric_from_csv(path)
    np.testing.assert_array_equal(back.d, run.final.d)
    # %.17g is byte-stable: writing again produces identical bytes
    path2 = tmp_path / "d2.csv"
    metric_to_csv(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_residuals_csv_and_json(tmp_path):
    run = solve_metric(make_chain_example(), 1e-9)
    path = tmp_path / "r.csv"
    residuals_to_csv(run, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "sweep,residual"
    assert len(lines) == 1 + run.iterations
    doc = metric_to_json(run.final)
    assert doc["n"] == 3
    assert doc["d"][0][1] == pytest.approx(1.9)
