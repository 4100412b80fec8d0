import numpy as np
import pytest

from pebo.errors import BadEigenvalue, NonInjective, NoSolution, Singular
from pebo.example import DEFAULT_BOX, ClosedFormTransform, P_matrix, example_design, example_model
from pebo.flows import IntegratorConfig
from pebo.system import SystemModel
from pebo.transform import (LeftInverseConfig, QuadratureTransform, cluster, eval_T, eval_phi,
                            eval_phi_jacobian, left_inverse, make_design, pde_residual)

M, D = example_model(), example_design()
COARSE = IntegratorConfig(1e-3)
STATIC = SystemModel(n=1, p=1, f=lambda x, t: 0.0 * x, h=lambda x: x)


def printed_P(t):
    # the matrix as printed, one literal entry at a time
    e = np.exp
    return np.array([[t * e(t), e(t) + t * e(t) - e(2 * t), (e(3 * t) - e(t)) / 2],
                     [e(2 * t) - e(t), e(2 * t) - e(t) - t * e(2 * t), e(3 * t) - e(2 * t)],
                     [(e(3 * t) - e(t)) / 2, (e(3 * t) - e(t)) / 2 - e(3 * t) + e(2 * t),
                      t * e(3 * t)]])


def test_design_example():
    assert np.allclose(D.A, np.diag([-1.0, -2.0, -3.0]))
    assert np.allclose(D.B, np.ones((3, 1))) and D.n_z == 3


def test_design_two_outputs():
    d = make_design(1, 2, [-1.0, -2.0])
    assert d.n_z == 4
    assert np.allclose(np.diag(d.A), [-1, -2, -1, -2])
    assert np.allclose(d.B, [[1, 0], [1, 0], [0, 1], [0, 1]])


def test_bad_eigenvalue():
    with pytest.raises(BadEigenvalue):
        make_design(2, 1, [-1.0, 1.0, -3.0])


def test_shifted_hurwitz_and_decay():
    d = make_design(2, 1, [-1.0, -2.0, -3.0], rho=3.5, H="exp_decay")
    assert d.shifted_hurwitz()
    norms = [np.linalg.norm(d.beta(np.ones(1), t)) for t in np.linspace(0, 2, 21)]
    assert np.all(np.diff(norms) <= 1e-12)


def test_exp_decay_round_trip(rng):
    d = make_design(2, 1, [-1.0, -2.0, -3.0], rho=0.7, H="exp_decay")
    assert d.H.roundtrip_error(rng.standard_normal((10, 1)), rng.uniform(0, 3, 10)) < 1e-12


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_P_transcription(t):
    assert np.allclose(P_matrix(t), printed_P(t), rtol=1e-14, atol=0)
    assert abs(np.linalg.det(P_matrix(t))) > 0


def test_P_zero_at_origin():
    assert np.allclose(P_matrix(0.0), 0.0)


def test_T_is_zero_at_t0():
    assert np.allclose(eval_T(M, D, np.array([1.0, 1.0]), 0.0), 0.0)
    assert np.allclose(eval_phi_jacobian(M, D, np.array([1.0, 1.0]), 0.0), 0.0)


def test_T_matches_closed_form():
    x = np.array([1.0, 1.0])
    T = eval_T(M, D, x, 0.5)
    ref = np.exp(-np.array([1.0, 2.0, 3.0]) * 0.5) * (printed_P(0.5) @ [1.0, 1.0, 1.0])
    assert np.max(np.abs(T - ref)) < 1e-5


def test_T_static_plant():
    d = make_design(1, 1, [-1.0, -2.0])
    t, x = 0.7, np.array([1.3])
    ref = x[0] * np.array([1 - np.exp(-t), (1 - np.exp(-2 * t)) / 2])
    assert np.allclose(eval_T(STATIC, d, x, t), ref, atol=1e-8)


def test_phi_first_column():
    assert np.allclose(eval_phi(M, D, np.array([0.0, 1.0]), 0.5), printed_P(0.5)[:, 0],
                       atol=1e-5)


def test_jacobian_closed_form_and_differences(rng):
    q = QuadratureTransform(M, D, COARSE)
    for _ in range(3):
        x, t = rng.uniform(-2, 2, 2), rng.uniform(0.1, 1.0)
        J = q.jacobian(x, t)
        ref = printed_P(t) @ np.array([[0, 1], [2 * x[0], 0], [3 * x[0] ** 2, 0]])
        assert np.max(np.abs(J - ref)) < 1e-5 * max(1.0, np.max(np.abs(ref)))
        eps = 1e-6
        fd = np.stack([(q.phi(x + eps * e, t) - q.phi(x - eps * e, t)) / (2 * eps)
                       for e in np.eye(2)], axis=-1)
        assert np.max(np.abs(J - fd)) / np.max(np.abs(fd)) < 1e-4


def test_pde_residual_closed_form(rng):
    ev = ClosedFormTransform()
    X = rng.uniform(-2, 2, (20, 2))
    for t in (0.2, 0.6, 0.9):
        r = pde_residual(M, D, X, t, evaluator=ev)
        assert np.max(np.linalg.norm(r, axis=-1)) < 1e-6


def test_pde_residual_detects_wrong_beta():
    ev = ClosedFormTransform()
    x = np.array([0.5, 0.5])
    r = pde_residual(M, D, x, 0.5, evaluator=ev, beta=lambda y, t: np.zeros(3))
    assert np.allclose(r, D.beta(M.output(x), 0.5), atol=1e-6)


def test_left_inverse_round_trip_quadrature():
    q = QuadratureTransform(M, D, COARSE)
    x = np.array([0.7, -1.1])
    xr = left_inverse(q, q.phi(x, 0.5), 0.5, DEFAULT_BOX)
    assert np.max(np.abs(xr - x)) < 1e-5


def test_left_inverse_matches_analytic(rng):
    ev = ClosedFormTransform()
    ms = LeftInverseConfig(method="multistart")
    for _ in range(5):
        x, t = rng.uniform(-2, 2, 2), rng.uniform(0.3, 1.0)
        z = ev.phi(x, t)
        a = ev.analytic_inverse(z, t)
        assert np.max(np.abs(left_inverse(ev, z, t, DEFAULT_BOX, ms) - a)) < 1e-6


def test_analytic_inverse_singularities():
    ev = ClosedFormTransform()
    with pytest.raises(Singular):
        ev.analytic_inverse(np.ones(3), 0.0)
    with pytest.raises(Singular):
        ev.analytic_inverse(ev.phi(np.array([0.0, 1.0]), 0.5), 0.5)


def test_left_inverse_at_t0_not_injective():
    ev = ClosedFormTransform()
    with pytest.raises(NonInjective):
        left_inverse(ev, np.zeros(3), 0.0, DEFAULT_BOX)


def test_left_inverse_off_image():
    ev = ClosedFormTransform()
    z = ev.phi(np.array([0.5, 0.5]), 0.5) + np.array([1.0, -1.0, 1.0])
    with pytest.raises(NoSolution):
        left_inverse(ev, z, 0.5, DEFAULT_BOX)


def test_cluster_labels():
    pts = np.array([[0.0, 0.0], [0.5e-4, 0.0], [1.0, 1.0]])
    assert cluster(pts, 1e-4).tolist() == [0, 0, 1]


def test_cache_is_transparent():
    q = QuadratureTransform(M, D, COARSE)
    x = np.array([0.3, 0.2])
    a = q.phi(x, 0.4)
    b = q.phi(x, 0.4)
    c = QuadratureTransform(M, D, COARSE).phi(x, 0.4)
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_growth_warning():
    q = QuadratureTransform(M, D, IntegratorConfig(1e-2))
    with pytest.warns(RuntimeWarning):
        q.phi(np.array([0.1, 0.1]), 4.0)
