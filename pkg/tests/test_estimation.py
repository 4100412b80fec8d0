import numpy as np
import pytest

from pebo.estimation import (EstimatorConfig, RegressionDataset, batch_estimate, cost_J,
                             expanding_horizon_estimate, expanding_windows, nelder_mead,
                             reconstruct_state)
from pebo.example import DEFAULT_BOX, run_landscape
from pebo.system import DomainBox, SystemModel
from pebo.transform import LeftInverseConfig, TransformEvaluator, make_design


def test_cost_zero_at_truth(scenario_data):
    assert cost_J(scenario_data.dataset, scenario_data.theta) < 1e-10


def test_cost_is_nonnegative_and_reproducible(scenario_data, batch_run):
    res = batch_run.result
    assert res.cost >= 0
    assert cost_J(scenario_data.dataset, res.theta_hat) == pytest.approx(res.cost, rel=1e-12,
                                                                         abs=1e-30)


def test_nodes_capped(scenario_data):
    ds = scenario_data.dataset
    assert ds.nodes().size <= 200 and ds.nodes()[-1] == ds.times.size - 1


def test_window_monotone(scenario_data, rng):
    ds = scenario_data.dataset
    th = scenario_data.theta + 1e-3 * rng.standard_normal(3)
    J = [cost_J(ds.window(0.1, te), th) for te in (0.2, 0.5, 1.0)]
    assert J[0] <= J[1] <= J[2]


def test_constrained_penalty(scenario_data):
    ds = scenario_data.dataset
    th = scenario_data.theta
    assert cost_J(ds, th, constrained=True) < 1e-10
    assert cost_J(ds, th + np.array([1.0, -1.0, 1.0]), constrained=True) > 1e5


def test_nelder_mead_quadratic():
    a = np.array([0.5, -0.25, 2.0])
    res = nelder_mead(lambda th: float(np.sum((th - a) ** 2)), np.zeros(3),
                      EstimatorConfig(f_target=0.0, start_steps=(None,)))
    assert np.max(np.abs(res.theta_hat - a)) < 1e-8


def test_nelder_mead_rosenbrock():
    def f(x):
        return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    res = nelder_mead(f, np.array([-1.2, 1.0]), EstimatorConfig(max_evals=2000))
    assert np.max(np.abs(res.theta_hat - 1.0)) < 1e-4


def test_budget_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(max_evals=2).settings(3)


def test_start_at_truth(scenario_data):
    cfg = EstimatorConfig(theta0=scenario_data.theta, f_target=1e-12)
    res = batch_estimate(scenario_data.dataset, cfg)
    assert np.array_equal(res.theta_hat, scenario_data.theta)
    assert res.cost < 1e-12 and res.evals <= 3 + 2


def test_single_sample_matches_grid_search(scenario_data):
    ds = scenario_data.dataset
    k = int(np.argmin(np.abs(ds.times - 0.2)))
    one = RegressionDataset(ds.times[k:k + 1], ds.y[k:k + 1], ds.zeta[k:k + 1], ds.evaluator,
                            ds.box)
    res = batch_estimate(one, EstimatorConfig(theta0=scenario_data.theta * 1.5))
    land = run_landscape(scenario_data.scenario, t_prime=ds.times[k], grid=41,
                         theta3_fixed=res.theta_hat[2], data=scenario_data)
    assert res.cost <= land.J.min() + 1e-12
    assert res.cost < 1e-16


def test_expanding_first_window_is_batch(scenario_data):
    ds = scenario_data.dataset.window(0.1, 0.3)
    cfg = EstimatorConfig()
    a = batch_estimate(ds, cfg)
    b = expanding_horizon_estimate([ds], cfg)
    assert np.array_equal(a.theta_hat, b.theta_hat) and a.cost == b.cost
    assert len(b.trace) == 1


def test_expanding_windows_cover_record(scenario_data):
    ws = expanding_windows(scenario_data.dataset, 0.1)
    assert len(ws) == 9
    assert ws[0].times[-1] == pytest.approx(0.2) and ws[-1].times[-1] == pytest.approx(1.0)
    assert all(w.stride == scenario_data.dataset.stride for w in ws)


class _ZeroTransform(TransformEvaluator):
    kind = "closed-form"

    def phi(self, x, t):
        return np.zeros(np.shape(x)[:-1] + (2,))


def test_flat_stream_keeps_warm_start():
    model = SystemModel(n=1, p=1, f=lambda x, t: -x, h=lambda x: 0.0 * x)
    ev = _ZeroTransform(model, make_design(1, 1, [-1.0, -2.0]))
    t = np.linspace(0.1, 0.5, 41)
    ds = RegressionDataset(t, np.zeros(41), np.zeros((41, 2)), ev, DomainBox([-1.0], [1.0]),
                           linv=LeftInverseConfig(starts=2, restarts=0))
    warm = np.array([0.3, -0.2])
    res = expanding_horizon_estimate(expanding_windows(ds, 0.1), EstimatorConfig(theta0=warm))
    assert all(np.array_equal(th, warm) for _, th, _ in res.trace)


def test_expanding_error_settles(expanding_run):
    tt = np.max(np.abs(expanding_run.data.theta - expanding_run.result.trace_arrays()[1]),
                axis=1)
    assert np.all(tt[2:] <= tt[1:-1] + 1e-8)


def test_warm_start_not_worse_than_cold(scenario_data, expanding_run):
    t_up, th_up, costs = expanding_run.result.trace_arrays()
    for i in (1, 4):
        w = scenario_data.dataset.window(0.1, t_up[i])
        cold = batch_estimate(w, EstimatorConfig())
        assert costs[i] <= max(cold.cost, EstimatorConfig().f_target)


def test_reconstruct_exact_theta(scenario_data):
    for k in (0, 3000, 9000):
        x = reconstruct_state(scenario_data.evaluator, scenario_data.extension.zeta.values[k],
                              scenario_data.theta, scenario_data.times[k], DEFAULT_BOX)
        assert np.max(np.abs(x - scenario_data.trajectory.states[k])) < 1e-5


def test_reconstruct_lipschitz_probe(scenario_data, rng):
    ev = scenario_data.evaluator
    k = 5000
    t = scenario_data.times[k]
    x = scenario_data.trajectory.states[k]
    L = np.linalg.norm(np.linalg.pinv(ev.jacobian(x, t)), 2)
    for _ in range(5):
        d = 1e-6 * rng.standard_normal(3)
        z = ev.phi(x, t) + d
        xh = reconstruct_state(ev, z - scenario_data.theta, scenario_data.theta, t, DEFAULT_BOX,
                               strict=False)
        assert np.linalg.norm(xh - x) <= 2 * L * np.linalg.norm(d) + 1e-9


def test_two_instant_global_minimum(scenario, scenario_data):
    land = run_landscape(scenario, t_prime=(0.2, 0.4), grid=101, data=scenario_data)
    i, j = land.cell_of(scenario_data.theta)
    J = land.J.copy()
    J_star = J[i, j]
    J[i, j] = np.inf
    # the neighbouring cells are one grid step away; demand a clear gap beyond them
    near = np.zeros_like(J, bool)
    near[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2] = True
    assert np.all(J > J_star)
    assert np.all(J[~near] > J_star + J[near & np.isfinite(J)].min() * 0.5)
