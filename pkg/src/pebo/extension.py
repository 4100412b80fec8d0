"""Dynamic extensions driven by the measured output.

``run_extension`` integrates ``zeta' = beta(y, t)`` so that
``phi(x(t), t) - zeta(t)`` stays constant along the plant run.
``run_gpebo_extension`` integrates the state-affine pair

    zeta'  = A(u, y, t) zeta + beta(u, y, t)
    Omega' = A(u, y, t) Omega,   Omega(t0) = I

whose contract is ``z(t) = zeta(t) + Omega(t) (z(t0) - zeta(t0))``.

Samples are interpolated linearly between grid nodes so that the RK4
midpoint stages see a second-order accurate signal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite
from .expm import expm_series
from .flows import IntegratorConfig, integrate_flow
from .system import SampledSignal, warn_if_outside


def _require_uniform(sig):
    if len(sig) < 1:
        raise ValueError("signal is empty")
    if len(sig) > 1:
        d = np.diff(sig.times)
        if not (np.all(d > 0) and np.allclose(d, d[0], rtol=1e-9, atol=1e-12)):
            raise ValueError("extension needs samples on a uniform increasing grid")


def _midpoints(values):
    return 0.5 * (values[1:] + values[:-1])


@dataclass(frozen=True)
class ExtensionRun:
    """``zeta`` on the measurement grid, started from ``zeta0``."""

    zeta: SampledSignal
    zeta0: np.ndarray
    design: object

    def theta(self, phi_values):
        """``phi(x(t_k), t_k) - zeta(t_k)`` for precomputed ``phi`` values."""
        return np.asarray(phi_values) - self.zeta.values


@dataclass(frozen=True)
class GpeboRun:
    zeta: SampledSignal
    Omega: np.ndarray      # (N, n_z, n_z)

    def condition(self):
        """Condition number of ``Omega(t_k)`` per grid node."""
        return np.linalg.cond(self.Omega)

    def reconstruct(self, theta):
        """``zeta(t) + Omega(t) theta`` on the grid."""
        return self.zeta.values + self.Omega @ np.asarray(theta, dtype=float)


def run_extension(design, y, zeta0=None):
    """Integrate ``zeta' = exp(-A t) B H(y(t), t)`` on the grid of ``y``.

    :param design: :class:`~pebo.transform.ObserverDesign`
    :param y: output samples on a uniform grid
    :param zeta0: ``zeta`` at the first sample time (zero by default)
    :raises NonFinite: when ``zeta`` overflows
    """
    _require_uniform(y)
    nz = design.n_z
    z0 = np.zeros(nz) if zeta0 is None else np.asarray(zeta0, dtype=float).reshape(nz)
    times = y.times
    N = times.size
    out = np.empty((N, nz))
    out[0] = z0
    if N > 1:
        h = times[1] - times[0]
        # integrand at nodes and at the RK4 midpoints; beta does not depend
        # on zeta, so RK4 reduces to Simpson's rule per step
        G = expm_series(-design.A, times) @ design.B               # (N, nz, p)
        Gm = expm_series(-design.A, times[:-1] + 0.5 * h) @ design.B
        Hn = design.H(y.values, times[:, None])
        Hm = design.H(_midpoints(y.values), (times[:-1] + 0.5 * h)[:, None])
        fn = np.einsum("kij,kj->ki", G, Hn)
        fm = np.einsum("kij,kj->ki", Gm, Hm)
        incr = (h / 6.0) * (fn[:-1] + 4.0 * fm + fn[1:])
        out[1:] = z0 + np.cumsum(incr, axis=0)
    if not np.all(np.isfinite(out)):
        raise NonFinite("extension state overflowed; increase rho or shorten the horizon")
    return ExtensionRun(SampledSignal(times, out, uniform=True), z0, design)


def run_gpebo_extension(Afun, betafun, y, zeta0=None, u=None):
    """Joint RK4 integration of ``zeta`` and ``Omega`` on the grid of ``y``.

    :param Afun: ``(u, y, t) -> (n_z, n_z)``
    :param betafun: ``(u, y, t) -> (n_z,)``
    :param y: output samples (uniform grid)
    :param u: optional input samples on the same grid
    """
    _require_uniform(y)
    times = y.times
    uv = None if u is None else u.values
    if u is not None and u.times.shape != times.shape:
        raise ValueError("u and y must share the grid")
    yv = y.values

    def sig(k, half):
        if half:
            return (None if uv is None else 0.5 * (uv[k] + uv[k + 1])), 0.5 * (yv[k] + yv[k + 1])
        return (None if uv is None else uv[k]), yv[k]

    u0, y0 = sig(0, False)
    nz = np.asarray(Afun(u0, y0, times[0])).shape[0]
    z = np.zeros(nz) if zeta0 is None else np.asarray(zeta0, dtype=float).reshape(nz)
    # packed state [zeta | Omega] of shape (nz, nz + 1)
    S = np.concatenate([z[:, None], np.eye(nz)], axis=1)
    N = times.size
    zetas = np.empty((N, nz))
    Omegas = np.empty((N, nz, nz))
    zetas[0], Omegas[0] = S[:, 0], S[:, 1:]

    def rhs(S, uu, yy, t):
        A = np.asarray(Afun(uu, yy, t), dtype=float)
        d = A @ S
        d[:, 0] += np.asarray(betafun(uu, yy, t), dtype=float)
        return d

    for k in range(N - 1):
        t = times[k]
        h = times[k + 1] - t
        ua, ya = sig(k, False)
        um, ym = sig(k, True)
        ub, yb = sig(k + 1, False)
        k1 = rhs(S, ua, ya, t)
        k2 = rhs(S + 0.5 * h * k1, um, ym, t + 0.5 * h)
        k3 = rhs(S + 0.5 * h * k2, um, ym, t + 0.5 * h)
        k4 = rhs(S + h * k3, ub, yb, t + h)
        S = S + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(S)):
            raise NonFinite(f"GPEBO extension overflowed at t={times[k + 1]:g}")
        zetas[k + 1], Omegas[k + 1] = S[:, 0], S[:, 1:]
    return GpeboRun(SampledSignal(times, zetas, uniform=True), Omegas)


def simulate_plant(model, x0, t0, tf, cfg=IntegratorConfig(), box=None):
    """Forward plant run from ``(t0, x0)``; warns if states leave ``box``."""
    traj = integrate_flow(model, np.asarray(x0, dtype=float), t0, tf, cfg)
    warn_if_outside(box, traj.states, "plant simulation")
    return traj


def measure(model, traj, noise_std=0.0, rng=None):
    """Output samples ``h(x(t_k))`` with optional white noise."""
    y = model.output(traj.states)
    if noise_std > 0.0:
        rng = np.random.default_rng() if rng is None else rng
        y = y + noise_std * rng.standard_normal(y.shape)
    return SampledSignal(traj.times, y, uniform=True)
