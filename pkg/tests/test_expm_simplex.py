import numpy as np
import scipy.linalg
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pebo.expm import expm, expm_series
from pebo.simplex import SimplexConfig, minimize, minimize_batch


@settings(max_examples=50, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-3, 3)))
def test_expm_matches_scipy(M):
    assert np.allclose(expm(M), scipy.linalg.expm(M), rtol=1e-10, atol=1e-10)


def test_expm_diagonal_fast_path():
    assert np.allclose(expm(np.diag([-1.0, 2.0])), np.diag(np.exp([-1.0, 2.0])))


def test_expm_series_uniform_grid(rng):
    A = rng.standard_normal((3, 3))
    t = np.linspace(0.0, 1.0, 11)
    E = expm_series(A, t)
    assert np.allclose(E[7], scipy.linalg.expm(A * t[7]), atol=1e-12)


def test_quadratic():
    a = np.array([0.3, -1.2, 2.5])
    r = minimize(lambda x: float(np.sum((x - a) ** 2)), np.zeros(3))
    assert np.max(np.abs(r.x - a)) < 1e-8


def test_rosenbrock():
    def f(x):
        return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    r = minimize(f, np.array([-1.2, 1.0]), SimplexConfig(max_evals=2000))
    assert np.max(np.abs(r.x - 1.0)) < 1e-4


def test_budget_flag():
    r = minimize(lambda x: float(np.sum(x ** 2)), np.ones(2), SimplexConfig(max_evals=10))
    assert r.hit_max_evals and r.evals <= 12


def test_batch_problems_independent():
    targets = np.array([[1.0, 2.0], [-3.0, 0.5]])

    def f(points, which):
        return np.sum((points - targets[which]) ** 2, axis=-1)

    S = np.repeat(np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])[None], 2, axis=0)
    r = minimize_batch(f, S)
    assert np.allclose(r.x, targets, atol=1e-8)


def test_exact_tie_keeps_smallest_vertex():
    # a flat cost only shrinks the simplex towards its smallest vertex
    r = minimize(lambda x: 0.0, np.array([1.0, 1.0]))
    assert np.allclose(r.x[0], [1.0, 1.0]) and not r.hit_max_evals[0]
