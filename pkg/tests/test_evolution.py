import numpy as np
import pytest

from mdpmetric import maximize


def _sphere_peak(center):
    def fn(x):
        return -float(np.sum((x - center) ** 2))

    return fn


def test_maximize_finds_sphere_peak():
    center = np.array([1.5, -2.0, 0.25])
    bounds = np.array([[-5.0, 5.0]] * 3)
    res = maximize(_sphere_peak(center), bounds, seed=0, max_generations=300, tol=1e-10)
    np.testing.assert_allclose(res.best_x, center, atol=1e-3)
    assert res.best_value == pytest.approx(0.0, abs=1e-5)


def test_peak_on_boundary_is_reachable():
    bounds = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    res = maximize(lambda x: float(x.sum()), bounds, seed=3, max_generations=200)
    np.testing.assert_allclose(res.best_x, [1.0, 1.0], atol=1e-3)


def test_candidates_respect_bounds():
    bounds = np.array([[0.0, 1.0], [2.0, 3.0]])
    seen = []

    def fn(x):
        seen.append(x.copy())
        return 0.0

    maximize(fn, bounds, seed=1, max_generations=5, tol=-1.0)  # tol<0: never converges early
    arr = np.array(seen)
    assert arr[:, 0].min() >= 0.0 and arr[:, 0].max() <= 1.0
    assert arr[:, 1].min() >= 2.0 and arr[:, 1].max() <= 3.0


def test_trace_is_nondecreasing_and_counts_match():
    bounds = np.array([[-3.0, 3.0]] * 2)
    res = maximize(_sphere_peak(np.zeros(2)), bounds, seed=7, max_generations=50, tol=-1.0)
    trace = np.asarray(res.trace)
    assert trace.shape == (res.n_generations,)
    assert np.all(np.diff(trace) >= 0.0)
    pop = min(15 * 2, 300)
    assert res.n_evaluations == pop * (res.n_generations + 1)  # init + per-generation


def test_deterministic_given_seed():
    bounds = np.array([[-2.0, 2.0]] * 4)
    a = maximize(_sphere_peak(np.ones(4)), bounds, seed=42, max_generations=60)
    b = maximize(_sphere_peak(np.ones(4)), bounds, seed=42, max_generations=60)
    np.testing.assert_array_equal(a.best_x, b.best_x)
    assert a.best_value == b.best_value
    assert a.n_generations == b.n_generations
    c = maximize(_sphere_peak(np.ones(4)), bounds, seed=43, max_generations=60)
    assert not np.array_equal(a.best_x, c.best_x)


def test_constant_objective_converges_immediately():
    bounds = np.array([[-1.0, 1.0]] * 3)
    res = maximize(lambda x: 4.25, bounds, seed=0, max_generations=500)
    assert res.converged
    assert res.n_generations < 5
    assert res.best_value == 4.25


def test_population_size_override_and_floor():
    bounds = np.array([[-1.0, 1.0]])
    res = maximize(_sphere_peak(np.zeros(1)), bounds, seed=0, max_generations=20, population_size=6)
    assert res.n_evaluations == 6 * (res.n_generations + 1)
    # rand/1 needs three distinct partners: requests below 4 are floored to 4
    res = maximize(
        _sphere_peak(np.zeros(1)), bounds, seed=0, max_generations=10, population_size=3, tol=-1.0
    )
    assert res.n_evaluations == 4 * (res.n_generations + 1)


def test_callback_sees_every_generation():
    gens = []
    bounds = np.array([[-1.0, 1.0]] * 2)
    res = maximize(
        _sphere_peak(np.zeros(2)),
        bounds,
        seed=5,
        max_generations=30,
        tol=-1.0,
        callback=lambda gen, best: gens.append(gen),
    )
    assert gens == list(range(1, res.n_generations + 1))


def test_bounds_validation():
    with pytest.raises(ValueError):
        maximize(lambda x: 0.0, np.array([[1.0, -1.0]]), seed=0)
    with pytest.raises(ValueError):
        maximize(lambda x: 0.0, np.zeros((0, 2)), seed=0)
