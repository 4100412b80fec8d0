import numpy as np
import pytest

from pebo.errors import NonFinite
from pebo.example import analytic_flow, analytic_flow_jacobian, example_model
from pebo.flows import IntegratorConfig, integrate_flow, output_along_flow, variational_flow
from pebo.system import SystemModel

M = example_model()


def test_forward_endpoint():
    e = np.exp(-1.0)
    end = integrate_flow(M, np.array([1.0, 1.0]), 0.0, 1.0).end
    assert np.allclose(end, [e, e + (e - e * e)], atol=1e-8)


def test_backward_endpoint():
    x = np.array([1.0, 0.0])
    end = integrate_flow(M, x, 1.0, 0.0).end
    assert np.allclose(end, analytic_flow(x, 1.0, 0.0), atol=1e-8)


def test_empty_horizon():
    tr = integrate_flow(M, np.array([0.3, 0.4]), 0.5, 0.5)
    assert tr.states.shape == (1, 2) and np.allclose(tr.states[0], [0.3, 0.4])


def test_semigroup():
    x = np.array([0.7, -0.2])
    a = integrate_flow(M, integrate_flow(M, x, 0.0, 0.4).end, 0.4, 0.9).end
    b = integrate_flow(M, x, 0.0, 0.9).end
    assert np.max(np.abs(a - b)) < 1e-12


def test_fourth_order_convergence():
    x = np.array([1.5, -1.0])
    exact = analytic_flow(x, 0.0, 1.0)
    e1 = np.max(np.abs(integrate_flow(M, x, 0.0, 1.0, IntegratorConfig(0.1)).end - exact))
    e2 = np.max(np.abs(integrate_flow(M, x, 0.0, 1.0, IntegratorConfig(0.05)).end - exact))
    assert e1 / e2 >= 12


def test_step_divides_spacing():
    cfg = IntegratorConfig(1e-4)
    assert cfg.divides(1e-2) and not cfg.divides(1.5e-4)
    with pytest.raises(ValueError):
        IntegratorConfig(0.0)


def test_blow_up_raises():
    m = SystemModel(n=1, p=1, f=lambda x, t: x ** 3, h=lambda x: x)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NonFinite):
        integrate_flow(m, np.array([1.5]), 0.0, 1.0, IntegratorConfig(0.1))


def test_output_on_x1_zero_slice():
    x = np.array([0.0, 1.3])
    sig = output_along_flow(M, x, 1.0, (0.6, 1.0))
    assert np.allclose(sig.values[:, 0], 1.3 * np.exp(-(sig.times - 1.0)), atol=1e-10)
    assert sig.times[0] < sig.times[-1]


def test_output_matches_closed_form():
    x = np.array([1.0, 1.0])
    sig = output_along_flow(M, x, 1.0, (0.9, 1.0))
    X = analytic_flow(x, 1.0, sig.times)
    assert np.max(np.abs(sig.values[:, 0] - (X[:, 1] + X[:, 0] ** 3))) < 1e-8


def test_constant_output():
    m = SystemModel(n=1, p=1, f=lambda x, t: -x, h=lambda x: np.array([2.0]))
    assert np.allclose(output_along_flow(m, np.array([1.0]), 1.0, (0.5, 1.0)).values, 2.0)


def test_variational_identity_and_closed_form():
    x = np.array([0.9, -0.4])
    vf = variational_flow(M, x, 0.3, 1.0)
    assert np.allclose(vf.jac[0], np.eye(2))
    assert np.max(np.abs(vf.jac - analytic_flow_jacobian(x, 0.3, vf.times))) < 1e-7


def test_chain_rule_order(rng):
    # the example flow is quadratic in x, so use a pendulum-like plant whose
    # flow has nonzero third derivatives
    m = SystemModel(n=2, p=1, f=lambda x, t: np.array([x[1], -np.sin(x[0]) - 0.1 * x[1]]),
                    h=lambda x: x[:1])
    cfg = IntegratorConfig(1e-3)
    x = np.array([0.8, 0.3])
    d = rng.standard_normal(2)
    J = variational_flow(m, x, 0.0, 1.0, cfg).jac[-1]
    errs = []
    for eps in (1e-3, 1e-4):
        fd = (integrate_flow(m, x + eps * d, 0.0, 1.0, cfg).end
              - integrate_flow(m, x - eps * d, 0.0, 1.0, cfg).end) / (2 * eps)
        errs.append(np.linalg.norm(fd - J @ d))
    assert np.log10(errs[0] / errs[1]) >= 1.9
