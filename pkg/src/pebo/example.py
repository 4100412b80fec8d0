"""Built-in two-state example and its three experiment protocols.

Plant::

    x1' = -x1
    x2' = -x2 + x1**2
    y   = x2 + x1**3

With ``A = diag(-1, -2, -3)``, ``B = 1_3`` and ``H = identity`` the
transform has the closed form ``phi(x, t) = P(t) (x2, x1**2, x1**3)``.

The protocols below run the single-instant cost landscape, the batch
estimate over the whole record and the expanding-horizon estimate, and
write their plot tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import Singular
from .estimation import (EstimatorConfig, RegressionDataset, batch_estimate,
                         expanding_horizon_estimate, expanding_windows, reconstruct_trajectory)
from .extension import measure, run_extension, simulate_plant
from .flows import IntegratorConfig
from .system import DomainBox, SystemModel
from .tables import write_csv
from .transform import LeftInverseConfig, TransformEvaluator, make_design, project_many

DEFAULT_BOX = DomainBox([-2.0, -2.0], [2.0, 2.0])


def _f(x, t):
    x = np.asarray(x, dtype=float)
    return np.stack([-x[..., 0], -x[..., 1] + x[..., 0] ** 2], axis=-1)


def _h(x):
    x = np.asarray(x, dtype=float)
    return (x[..., 1] + x[..., 0] ** 3)[..., None]


def _df(x, t):
    x = np.asarray(x, dtype=float)
    J = np.zeros(x.shape[:-1] + (2, 2))
    J[..., 0, 0] = -1.0
    J[..., 1, 0] = 2.0 * x[..., 0]
    J[..., 1, 1] = -1.0
    return J


def _dh(x):
    x = np.asarray(x, dtype=float)
    J = np.zeros(x.shape[:-1] + (1, 2))
    J[..., 0, 0] = 3.0 * x[..., 0] ** 2
    J[..., 0, 1] = 1.0
    return J


def example_model():
    return SystemModel(n=2, p=1, f=_f, h=_h, df_dx=_df, dh_dx=_dh, vectorized=True,
                       name="example_sec6")


def example_design(rho=0.0):
    return make_design(2, 1, [-1.0, -2.0, -3.0], rho=rho, H="identity")


def analytic_flow(x, t, s):
    """Exact ``X(x, t; s)`` of the example plant."""
    x = np.asarray(x, dtype=float)
    d = np.exp(-(s - t))
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([d * x1, d * x2 + x1**2 * (d - d**2)], axis=-1)


def analytic_flow_jacobian(x, t, s):
    """Exact ``dX/dx(x, t; s)``."""
    x = np.asarray(x, dtype=float)
    d = np.exp(-(np.asarray(s, dtype=float) - t))
    J = np.zeros(np.broadcast_shapes(x.shape[:-1], d.shape) + (2, 2))
    J[..., 0, 0] = d
    J[..., 1, 0] = 2.0 * x[..., 0] * (d - d**2)
    J[..., 1, 1] = d
    return J


def P_matrix(t):
    """The 3x3 matrix ``P(t)`` of the closed-form transform.

    ``t`` may be an array, in which case the result has shape ``t.shape + (3, 3)``.
    """
    t = np.asarray(t, dtype=float)
    e1, e2, e3 = np.exp(t), np.exp(2 * t), np.exp(3 * t)
    rows = [
        [t * e1, e1 + t * e1 - e2, (e3 - e1) / 2],
        [e2 - e1, e2 - e1 - t * e2, e3 - e2],
        [(e3 - e1) / 2, (e3 - e1) / 2 - e3 + e2, t * e3],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def monomials(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 1], x[..., 0] ** 2, x[..., 0] ** 3], axis=-1)


def _real_roots_quartic(coef):
    """Real roots of ``c4 x^4 + c3 x^3 + c2 x^2 + c1 x + c0`` row by row.

    ``coef`` has shape ``(M, 5)`` (highest degree first); returns ``(M, 4)``
    with NaN for missing/complex roots.
    """
    M = coef.shape[0]
    out = np.full((M, 4), np.nan)
    scale = np.max(np.abs(coef), axis=1)
    lead_ok = np.abs(coef[:, 0]) > 1e-12 * scale
    idx = np.flatnonzero(lead_ok)
    if idx.size:
        c = coef[idx] / coef[idx, :1]
        comp = np.zeros((idx.size, 4, 4))
        comp[:, 0, :] = -c[:, 1:]
        comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
        roots = np.linalg.eigvals(comp)
        real = np.abs(roots.imag) <= 1e-6 * (1.0 + np.abs(roots.real))
        out[idx] = np.where(real, roots.real, np.nan)
    for i in np.flatnonzero(~lead_ok):
        if scale[i] == 0.0:
            continue
        r = np.roots(coef[i])
        r = r[np.abs(r.imag) <= 1e-6 * (1.0 + np.abs(r.real))].real
        out[i, :r.size] = r
    # Newton polish on the quartic
    for _ in range(3):
        x = out
        p = (((coef[:, :1] * x + coef[:, 1:2]) * x + coef[:, 2:3]) * x + coef[:, 3:4]) * x + coef[:, 4:5]
        dp = ((4 * coef[:, :1] * x + 3 * coef[:, 1:2]) * x + 2 * coef[:, 2:3]) * x + coef[:, 3:4]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(dp) > 0, p / dp, 0.0)
        out = np.where(np.isfinite(step) & (np.abs(step) < 1e-3 * (1 + np.abs(x))), x - step, x)
    return out


class ClosedFormTransform(TransformEvaluator):
    """``phi(x, t) = P(t) (x2, x1^2, x1^3)`` with analytic Jacobian and inverse.

    ``candidates`` solves the left-inverse least squares exactly: for fixed
    ``x1`` the optimal ``x2`` is a clipped linear least-squares solution,
    and the profile cost is a polynomial in ``x1`` whose stationary points
    are roots of a quartic.
    """

    kind = "closed-form"

    def __init__(self):
        super().__init__(example_model(), example_design())

    def phi(self, x, t):
        return np.einsum("...ij,...j->...i", P_matrix(t), monomials(x))

    def jacobian(self, x, t):
        x = np.asarray(x, dtype=float)
        D = np.zeros(x.shape[:-1] + (3, 2))
        D[..., 0, 1] = 1.0
        D[..., 1, 0] = 2.0 * x[..., 0]
        D[..., 2, 0] = 3.0 * x[..., 0] ** 2
        return P_matrix(t) @ D

    def analytic_inverse(self, z, t, tol=1e-12):
        """``x1 = (e3' P^-1 z) / (e2' P^-1 z)``, ``x2 = e1' P^-1 z``."""
        P = P_matrix(t)
        if t == 0 or abs(np.linalg.det(P)) <= 1e-300:
            raise Singular(f"P({t}) is singular")
        w = np.linalg.solve(P, np.asarray(z, dtype=float).T).T
        den = w[..., 1]
        if np.any(np.abs(den) <= tol * (1.0 + np.max(np.abs(w), axis=-1))):
            raise Singular("vanishing denominator e2' P^-1 z (x1 -> 0)")
        return np.stack([w[..., 2] / den, w[..., 0]], axis=-1)

    def candidates(self, z, t, box):
        pts, costs = self.candidates_many(np.asarray(z, dtype=float)[None], np.array([t]), box)
        return pts[0], costs[0]

    def candidates_many(self, Z, times, box):
        """Exact minimizer candidates for rows ``Z[i]`` at ``times[i]``.

        Returns ``(points (M, K, 2), costs (M, K))``; unused slots carry an
        infinite cost.
        """
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        times = np.broadcast_to(np.asarray(times, dtype=float), (Z.shape[0],))
        M = Z.shape[0]
        lo1, lo2 = box.lower
        hi1, hi2 = box.upper
        P = P_matrix(times)                              # (M, 3, 3)
        p1, p2, p3 = P[:, :, 0], P[:, :, 1], P[:, :, 2]
        n1 = np.sum(p1 * p1, axis=1)
        degenerate = n1 <= 1e-300
        safe = np.where(degenerate, 1.0, n1)

        def proj(v):
            return v - (np.sum(v * p1, axis=1) / safe)[:, None] * p1

        branches = [(proj(Z), proj(p2), proj(p3)),
                    (Z - lo2 * p1, p2, p3),
                    (Z - hi2 * p1, p2, p3)]
        x1c = [np.tile([0.0, lo1, hi1], (M, 1))]
        for a, b, c in branches:
            dot = lambda u, v: np.sum(u * v, axis=1)  # noqa: E731
            coef = np.stack([3 * dot(c, c), 5 * dot(b, c), 2 * dot(b, b),
                             -3 * dot(a, c), -2 * dot(a, b)], axis=1)
            x1c.append(_real_roots_quartic(coef))
        x1 = np.concatenate(x1c, axis=1)                 # (M, 15)
        valid = np.isfinite(x1) & (x1 >= lo1) & (x1 <= hi1)
        x1 = np.where(valid, x1, 0.0)

        rest = Z[:, None, :] - x1[..., None] ** 2 * p2[:, None, :] - x1[..., None] ** 3 * p3[:, None, :]
        x2 = np.sum(rest * p1[:, None, :], axis=-1) / safe[:, None]
        x2 = np.where(degenerate[:, None], lo2, np.clip(x2, lo2, hi2))
        pts = np.stack([x1, x2], axis=-1)
        if degenerate.any():
            # phi does not depend on x2: expose both ends so ties are visible
            k = np.flatnonzero(degenerate)
            extra = pts[k].copy()
            extra[..., 1] = hi2
            pts_full = np.concatenate([pts, np.zeros_like(pts)], axis=1)
            pts_full[k, pts.shape[1]:] = extra
            valid = np.concatenate([valid, np.zeros_like(valid)], axis=1)
            valid[k, pts.shape[1]:] = valid[k, :pts.shape[1]]
            pts = pts_full
        r = Z[:, None, :] - np.einsum("mij,mkj->mki", P, monomials(pts))
        costs = np.where(valid, np.sum(r * r, axis=-1), np.inf)
        return pts, costs


def example_closed_form():
    return ClosedFormTransform()


# --------------------------------------------------------------------------
# experiment protocols
# --------------------------------------------------------------------------

STATE_HEADER = ("t", "x1", "x1hat", "x2", "x2hat")
THETA_HEADER = ("t", "theta1tilde", "theta2tilde", "theta3tilde")
LANDSCAPE_HEADER = ("theta1", "theta2", "J")


@dataclass
class ExampleScenario:
    """Plant run, observer design and solver settings of the example.

    The observer starts at ``t0 = 0.1`` s, before which the transform is
    far from injective.  ``x0`` is the plant state at ``t0``.

    :param x0: plant state at ``t0``
    :param zeta0: extension state at ``t0``
    :param sample_period: measurement and integration step
    :param noise_std: standard deviation of additive output noise
    :param seed: seeds the noise generator
    :param evaluator: ``"closed-form"`` or ``"quadrature"``
    :param model: another plant run through the same protocols (quadrature
        transform only); the built-in example when ``None``
    """

    x0: tuple = (0.8, -0.5)
    zeta0: tuple = (0.0, 0.0, 0.0)
    t0: float = 0.1
    tf: float = 1.0
    sample_period: float = 1e-4
    box: DomainBox = DEFAULT_BOX
    lambdas: tuple = (-1.0, -2.0, -3.0)
    noise_std: float = 0.0
    seed: int = 0
    update_period: float = 0.1
    evaluator: str = "closed-form"
    linv: LeftInverseConfig = LeftInverseConfig()
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    table_stride: int = 10
    model: SystemModel | None = None
    rho: float = 0.0
    H: str = "identity"

    def plant(self):
        return example_model() if self.model is None else self.model

    def design(self):
        m = self.plant()
        return make_design(m.n, m.p, list(self.lambdas), rho=self.rho, H=self.H)

    def make_evaluator(self):
        if self.evaluator == "closed-form":
            if self.model is not None or self.rho != 0.0 or self.H != "identity":
                raise ValueError("the closed form covers the built-in example only")
            if tuple(self.lambdas) != (-1.0, -2.0, -3.0):
                raise ValueError("the closed form needs lambdas (-1, -2, -3)")
            return ClosedFormTransform()
        if self.evaluator == "quadrature":
            from .transform import QuadratureTransform
            return QuadratureTransform(self.plant(), self.design(),
                                       IntegratorConfig(self.sample_period))
        raise ValueError(f"unknown evaluator {self.evaluator!r}")


@dataclass
class ScenarioData:
    """Everything one simulated run produces."""

    scenario: ExampleScenario
    evaluator: TransformEvaluator
    trajectory: object
    y: object
    extension: object
    theta: np.ndarray
    dataset: RegressionDataset

    @property
    def times(self):
        return self.trajectory.times


def simulate_scenario(scenario):
    """Plant run, output samples, extension run and the true offset."""
    ev = scenario.make_evaluator()
    cfg = IntegratorConfig(scenario.sample_period)
    traj = simulate_plant(ev.model, scenario.x0, scenario.t0, scenario.tf, cfg, scenario.box)
    rng = np.random.default_rng(scenario.seed)
    y = measure(ev.model, traj, scenario.noise_std, rng)
    ext = run_extension(ev.design, y, np.asarray(scenario.zeta0, dtype=float))
    theta = ev.phi(np.asarray(scenario.x0, dtype=float), scenario.t0) - ext.zeta0
    ds = RegressionDataset.from_run(y, ext, ev, scenario.box, linv=scenario.linv)
    return ScenarioData(scenario, ev, traj, y, ext, np.asarray(theta), ds)


@dataclass
class LandscapeResult:
    """Cost surface over ``(theta1, theta2)`` with ``theta3`` pinned.

    ``zero_floor`` marks cells whose residual at every pooled instant is
    within half a grid step of zero; ``basins`` lists one representative
    ``(theta1, theta2, J)`` per connected group of zero-floor local minima.
    """

    theta1: np.ndarray
    theta2: np.ndarray
    theta3: float
    J: np.ndarray
    zero_floor: np.ndarray
    basins: list
    t_prime: tuple
    theta_true: np.ndarray

    @property
    def n_basins(self):
        return len(self.basins)

    def cell_of(self, theta):
        """Grid indices of the cell nearest ``theta[:2]``."""
        return (int(np.argmin(np.abs(self.theta1 - theta[0]))),
                int(np.argmin(np.abs(self.theta2 - theta[1]))))

    def table(self):
        T1, T2 = np.meshgrid(self.theta1, self.theta2, indexing="ij")
        return T1.ravel(), T2.ravel(), self.J.ravel()


def _within_resolution(r):
    """``|r|`` at most half the largest change to any of the 8 neighbours."""
    p = np.pad(r, 1, mode="edge")
    m, n = r.shape
    dmax = np.zeros_like(r)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            dmax = np.maximum(dmax, np.abs(p[1 + di:1 + di + m, 1 + dj:1 + dj + n] - r))
    return np.abs(r) <= 0.5 * dmax


def zero_floor_basins(residuals):
    """Group the zero-floor local minima of ``J = sum r^2``.

    :param residuals: list of 2-D residual grids, one per pooled instant
    :returns: ``(J, zero_floor_mask, labels, count)``
    """
    residuals = [np.atleast_3d(r) for r in residuals]
    J = sum(np.sum(r ** 2, axis=-1) for r in residuals)
    zero = np.all([np.all(_within_resolution_nd(r), axis=-1) for r in residuals], axis=0)
    locmin = J <= ndimage.minimum_filter(J, size=3, mode="nearest")
    labels, count = ndimage.label(zero & locmin, structure=np.ones((3, 3)))
    return J, zero, labels, count


def _within_resolution_nd(r):
    return np.stack([_within_resolution(r[..., j]) for j in range(r.shape[-1])], axis=-1)


def run_landscape(scenario=None, t_prime=0.2, theta3_fixed=None, grid=101, span=5.0,
                  out=None, data=None):
    """Cost ``J(theta_hat)`` at one instant (or a few pooled instants).

    At a single instant the regression is one equation in three unknowns,
    so its zero set is a curve and several separate basins reach the
    floor.  Pooling two instants leaves only the true offset.

    :param t_prime: instant, or sequence of instants pooled into one cost
    :param theta3_fixed: value of the pinned third component (true value
        by default); any further components stay at their true values
    :param grid: points per axis
    :param span: half-width of each axis in units of ``|theta_i|``
    :param out: directory for ``landscape.csv`` (nothing written when ``None``)
    """
    scenario = ExampleScenario() if scenario is None else scenario
    data = simulate_scenario(scenario) if data is None else data
    inst = tuple(np.atleast_1d(np.asarray(t_prime, dtype=float)))
    times = data.times
    for tp in inst:
        if not (scenario.t0 < tp <= scenario.tf + 1e-12):
            raise ValueError(f"t_prime={tp} outside ({scenario.t0}, {scenario.tf}]")
    th = data.theta
    th3 = th[2] if theta3_fixed is None else float(theta3_fixed)
    a1 = th[0] + span * abs(th[0]) * np.linspace(-1.0, 1.0, grid)
    a2 = th[1] + span * abs(th[1]) * np.linspace(-1.0, 1.0, grid)
    T1, T2 = np.meshgrid(a1, a2, indexing="ij")
    Theta = np.repeat(th[None], T1.size, axis=0)
    Theta[:, 0], Theta[:, 1], Theta[:, 2] = T1.ravel(), T2.ravel(), th3
    residuals = []
    for tp in inst:
        k = int(np.argmin(np.abs(times - tp)))
        Z = data.extension.zeta.values[k] + Theta
        X, _ = project_many(data.evaluator, Z, np.full(Z.shape[0], times[k]), scenario.box,
                            scenario.linv)
        r = data.y.values[k] - data.evaluator.model.output(X)
        residuals.append(r.reshape(grid, grid, -1))
    J, zero, labels, count = zero_floor_basins(residuals)
    basins = []
    for lab in range(1, count + 1):
        idx = np.flatnonzero(labels.ravel() == lab)
        best = idx[np.argmin(J.ravel()[idx])]
        i, j = np.unravel_index(best, J.shape)
        basins.append((float(a1[i]), float(a2[j]), float(J[i, j])))
    res = LandscapeResult(a1, a2, th3, J, zero, basins, inst, th)
    if out is not None:
        write_csv(Path(out) / "landscape.csv", LANDSCAPE_HEADER, res.table())
    return res


@dataclass
class ExampleRun:
    """Outcome of the batch or expanding protocol."""

    result: object
    data: ScenarioData
    x_hat: np.ndarray
    state_table: tuple
    theta_table: tuple

    @property
    def theta_tilde(self):
        return self.data.theta - self.result.theta_hat


def _state_table(times, x, x_hat, stride, clip=None):
    sel = np.arange(0, times.size, max(int(stride), 1))
    if sel[-1] != times.size - 1:
        sel = np.append(sel, times.size - 1)
    if clip is not None:
        sel = sel[np.abs(x_hat[sel, 0]) <= clip]
    return (times[sel], x[sel, 0], x_hat[sel, 0], x[sel, 1], x_hat[sel, 1])


def _write_tables(out, state_table, theta_table):
    if out is None:
        return
    write_csv(Path(out) / "fig_state_recon.csv", STATE_HEADER, state_table)
    write_csv(Path(out) / "fig_theta_tilde.csv", THETA_HEADER, theta_table)


def run_batch(scenario=None, out=None, data=None):
    """One estimate over ``[t0, tf]``, then ``x_hat`` on the whole grid.

    :param out: directory for the two plot tables (nothing written when ``None``)
    """
    scenario = ExampleScenario() if scenario is None else scenario
    data = simulate_scenario(scenario) if data is None else data
    res = batch_estimate(data.dataset, scenario.estimator)
    res.trace = [(float(data.times[-1]), res.theta_hat.copy(), res.cost)]
    x_hat = reconstruct_trajectory(data.evaluator, data.times, data.extension.zeta.values,
                                   res.theta_hat, scenario.box, scenario.linv)
    states = _state_table(data.times, data.trajectory.states, x_hat, scenario.table_stride)
    tt = data.theta - res.theta_hat
    thetas = (np.array([data.times[-1]]),) + tuple(np.array([v]) for v in tt)
    _write_tables(out, states, thetas)
    return ExampleRun(res, data, x_hat, states, thetas)


def run_expanding(scenario=None, out=None, data=None, clip=2.0):
    """Re-estimate on ``[t0, t0 + k * update_period]`` with warm starts.

    Between updates ``x_hat`` uses the latest estimate; before the first
    update it uses the initial guess.  Rows with ``|x1_hat| > clip`` are
    left out of the state table.
    """
    scenario = ExampleScenario() if scenario is None else scenario
    data = simulate_scenario(scenario) if data is None else data
    windows = expanding_windows(data.dataset, scenario.update_period, scenario.t0)
    res = expanding_horizon_estimate(windows, scenario.estimator)
    t_up, th_up, _ = res.trace_arrays()
    theta0 = (np.zeros(data.dataset.n_z) if scenario.estimator.theta0 is None
              else np.asarray(scenario.estimator.theta0, dtype=float))
    times = data.times
    # estimate in force at each sample
    k = np.searchsorted(t_up, times + 1e-9, side="right") - 1
    x_hat = np.empty_like(data.trajectory.states)
    zeta = data.extension.zeta.values
    for j in range(-1, t_up.size):
        sel = np.flatnonzero(k == j)
        if sel.size == 0:
            continue
        th = theta0 if j < 0 else th_up[j]
        x_hat[sel] = reconstruct_trajectory(data.evaluator, times[sel], zeta[sel], th,
                                            scenario.box, scenario.linv)
    states = _state_table(times, data.trajectory.states, x_hat, scenario.table_stride, clip)
    tt = data.theta[None, :] - th_up
    thetas = (t_up,) + tuple(tt.T)
    _write_tables(out, states, thetas)
    return ExampleRun(res, data, x_hat, states, thetas)
