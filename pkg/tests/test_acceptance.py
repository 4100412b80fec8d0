"""Acceptance criteria 1-12 on the built-in example and two synthetic plants.

Each test records a one-line verdict that the session summary prints.
Run ``pytest tests/test_acceptance.py -v`` to see them.
"""
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import ACCEPTANCE
from pebo.analysis import ObsConfig, gramian_W_phi, rank_sweep
from pebo.estimation import cost_J
from pebo.example import (DEFAULT_BOX, ClosedFormTransform, example_design, example_model,
                          run_landscape)
from pebo.extension import run_gpebo_extension
from pebo.flows import IntegratorConfig, integrate_flow, variational_flow
from pebo.system import SampledSignal
from pebo.transform import LeftInverseConfig, QuadratureTransform, left_inverse_many, pde_residual

GRID = DEFAULT_BOX.grid(9)
TIMES = np.linspace(0.1, 1.0, 10)


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def closed_form_phi(x, t):
    """Transcribed matrix form, written out independently of the package."""
    e1, e2, e3 = np.exp(t), np.exp(2 * t), np.exp(3 * t)
    P = np.array([[t * e1, e1 + t * e1 - e2, (e3 - e1) / 2],
                  [e2 - e1, e2 - e1 - t * e2, e3 - e2],
                  [(e3 - e1) / 2, (e3 - e1) / 2 - e3 + e2, t * e3]])
    m = np.stack([x[..., 1], x[..., 0] ** 2, x[..., 0] ** 3], axis=-1)
    return m @ P.T


@pytest.fixture(scope="module")
def quad():
    return QuadratureTransform(example_model(), example_design(), IntegratorConfig(1e-4))


def test_c01_pde_residual(quad):
    t0 = time.perf_counter()
    worst = max(np.max(np.linalg.norm(pde_residual(quad.model, quad.design, GRID, t,
                                                   evaluator=quad), axis=-1))
                for t in TIMES)
    dt = time.perf_counter() - t0
    record(1, worst < 1e-4 and dt < 60, f"max PDE residual {worst:.2e} (< 1e-4), {dt:.1f} s")


def test_c02_theta_constancy(scenario_data):
    x = scenario_data.trajectory.states
    t = scenario_data.times
    phi = np.stack([closed_form_phi(xk, tk) for xk, tk in zip(x, t)])
    theta = phi - scenario_data.extension.zeta.values
    p2p = np.max(np.ptp(theta, axis=0))
    record(2, p2p < 1e-5, f"peak-to-peak theta drift {p2p:.2e} (< 1e-5)")


def test_c03_quadrature_vs_closed_form(quad):
    worst = 0.0
    for t in TIMES:
        a = quad.phi(GRID, t)
        b = closed_form_phi(GRID, t)
        nb = np.linalg.norm(b, axis=-1)
        err = np.linalg.norm(a - b, axis=-1) / np.where(nb > 0, nb, 1.0)
        worst = max(worst, float(err.max()))
    record(3, worst < 1e-4, f"max relative error {worst:.2e} (< 1e-4)")


def test_c04_round_trip():
    ev = ClosedFormTransform()
    cfg = LeftInverseConfig(tol_cost=1e-20)
    worst, failures = 0.0, 0
    for t in TIMES:
        X, status = left_inverse_many(ev, ev.phi(GRID, t), t, DEFAULT_BOX, cfg)
        failures += sum(s != "ok" for s in status)
        worst = max(worst, float(np.nanmax(np.abs(X - GRID))))
    _, status0 = left_inverse_many(ev, ev.phi(GRID, 0.0), 0.0, DEFAULT_BOX, cfg)
    fail0 = np.mean([s != "ok" for s in status0])
    ok = failures == 0 and worst < 1e-5 and fail0 == 1.0
    record(4, ok, f"round-trip error {worst:.1e} (< 1e-5), {failures} failures on "
                  f"t in [0.1, 1]; failure rate at t=0: {fail0:.0%}")


def test_c05_batch_identification(batch_run):
    err = float(np.max(np.abs(batch_run.theta_tilde)))
    record(5, err < 1e-3 and batch_run.elapsed < 300,
           f"|theta_tilde|_inf = {err:.1e} (< 1e-3), {batch_run.elapsed:.0f} s")


def test_c06_single_instant_landscape(scenario, scenario_data):
    one = run_landscape(scenario, t_prime=0.2, grid=101, data=scenario_data)
    two = run_landscape(scenario, t_prime=(0.2, 0.4), grid=101, data=scenario_data)
    home = one.zero_floor[one.cell_of(scenario_data.theta)]
    ok = one.n_basins >= 2 and two.n_basins == 1 and home
    record(6, ok, f"basins at t'=0.2: {one.n_basins} (>= 2); pooled 0.2+0.4: "
                  f"{two.n_basins} (== 1)")


def test_c07_rank_loss_loci():
    xs = np.linspace(-2, 2, 101)
    sw = rank_sweep(example_model(), [0.0, 0.5], 0, xs, 0.5, k=1)
    h = xs[1] - xs[0]
    expect = (np.abs(xs) < h / 2) | (np.abs(xs - 1 / 3) < h / 2)
    roots_ok = sw.roots.size == 2 and np.allclose(sw.roots, [0.0, 1 / 3], atol=1e-6)
    ok = np.array_equal(sw.flagged, expect) and roots_ok
    record(7, ok, f"flagged x1 = {np.round(xs[sw.flagged], 3).tolist()}, det roots "
                  f"{np.round(sw.roots, 8).tolist()}")


def test_c08_variational_flow(rng):
    m = example_model()
    cfg = IntegratorConfig(1e-4)
    worst_fd, worst_cf = 0.0, 0.0
    for x in rng.uniform(-2, 2, size=(5, 2)):
        t, s = 0.2, 0.9
        J = variational_flow(m, x, t, s, cfg).jac[-1]
        eps = 1e-6
        fd = np.stack([(integrate_flow(m, x + eps * e, t, s, cfg).end
                        - integrate_flow(m, x - eps * e, t, s, cfg).end) / (2 * eps)
                       for e in np.eye(2)], axis=-1)
        d = np.exp(-(s - t))
        cf = np.array([[d, 0.0], [2 * x[0] * (d - d * d), d]])
        worst_fd = max(worst_fd, np.max(np.abs(J - fd)) / np.max(np.abs(fd)))
        worst_cf = max(worst_cf, np.max(np.abs(J - cf)))
    ok = worst_fd < 1e-5 and worst_cf < 1e-7
    record(8, ok, f"vs finite differences {worst_fd:.1e} (< 1e-5), vs closed form "
                  f"{worst_cf:.1e} (< 1e-7)")


def test_c09_gramian_verdicts():
    m, d, ev = example_model(), example_design(), ClosedFormTransform()
    gen = gramian_W_phi(m, d, [0.8, -0.5], 1.0, evaluator=ev)
    flat = gramian_W_phi(m, d, [0.0, -0.5], 1.0, evaluator=ev)
    ratio = gen.eigenvalues[0] / gen.eigenvalues[-1]
    ok = gen.nonsingular and ratio > 1e-8 and not flat.nonsingular
    record(9, ok, f"generic: min/max eig {ratio:.1e} -> {gen.verdict}; "
                  f"x1=0: psi deficient on {flat.deficient_fraction:.0%} -> {flat.verdict}")


def test_c10_window_monotonicity(scenario_data, rng):
    ds = scenario_data.dataset
    windows = [ds.window(0.1, te) for te in (0.3, 0.55, 0.8, 1.0)]
    th = scenario_data.theta
    bad = 0
    for _ in range(1000):
        cand = th + rng.uniform(-5, 5, size=3) * np.abs(th)
        J = [cost_J(w, cand) for w in windows]
        bad += int(np.any(np.diff(J) < 0))
    record(10, bad == 0, f"{bad} of 1000 random theta_hat violate nested-window monotonicity")


def test_c11_expanding_horizon(expanding_run, batch_run):
    final = float(np.max(np.abs(expanding_run.theta_tilde)))
    batch = float(np.max(np.abs(batch_run.theta_tilde)))
    t, th, c = expanding_run.result.trace_arrays()
    finite = bool(np.all(np.isfinite(th)) and np.all(np.isfinite(c)))
    ok = final <= 2 * batch and finite
    record(11, ok, f"final |theta_tilde| {final:.2e} <= 2 x batch {batch:.2e}; "
                   f"trace finite: {finite}")


def test_c12_gpebo_extension(rng):
    nz = 4
    M = rng.standard_normal((nz, nz))
    A0 = -(M @ M.T) / nz - 0.5 * np.eye(nz)
    A1 = 0.3 * rng.standard_normal((nz, nz))
    b0, b1 = rng.standard_normal(nz), rng.standard_normal(nz)

    def ysig(t):
        return np.array([np.sin(3 * t), np.cos(2 * t)])

    def Afun(u, y, t):
        return A0 + y[0] * A1 + 0.2 * np.sin(t) * np.eye(nz)

    def betafun(u, y, t):
        return b0 * y[1] + b1 * np.cos(t)

    times = np.linspace(0.0, 1.0, 2001)
    y = SampledSignal(times, np.stack([ysig(t) for t in times]), uniform=True)
    zeta0 = rng.standard_normal(nz)
    run = run_gpebo_extension(Afun, betafun, y, zeta0)
    z0 = rng.standard_normal(nz)
    sol = solve_ivp(lambda t, z: Afun(None, ysig(t), t) @ z + betafun(None, ysig(t), t),
                    (0.0, 1.0), z0, t_eval=times, rtol=1e-12, atol=1e-13, method="DOP853")
    z_pred = run.reconstruct(z0 - zeta0)
    err = float(np.max(np.abs(z_pred - sol.y.T)))
    record(12, err < 1e-6, f"max |z - (zeta + Omega (z0 - zeta0))| = {err:.1e} (< 1e-6)")
