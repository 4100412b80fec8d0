"""Fixed-step RK4 flows of the plant, output evolutions and sensitivities.

Backward flows are computed through the substitution ``tau = t - s``: the
reflected field ``-f(x, t - tau)`` is integrated forward in ``tau``, so the
integrator only ever takes positive steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFinite
from .system import SampledSignal, Trajectory


@dataclass(frozen=True)
class IntegratorConfig:
    """Classical fourth-order Runge-Kutta with a fixed nominal step."""

    step: float = 1e-4

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("integrator step must be positive")

    def num_steps(self, span):
        """Number of steps covering ``|span|``; the step is shrunk to fit exactly."""
        span = abs(span)
        if span == 0.0:
            return 0
        ratio = span / self.step
        k = round(ratio)
        if k >= 1 and abs(ratio - k) <= 1e-9 * max(1.0, ratio):
            return int(k)
        return int(math.ceil(ratio))

    def divides(self, spacing, tol=1e-12):
        """True when the step divides ``spacing`` to within ``tol``."""
        k = round(spacing / self.step)
        return k >= 1 and abs(k * self.step - spacing) <= tol


def rk4(rhs, y0, t0, h, nsteps, callback=None, store=True):
    """Integrate ``y' = rhs(y, t)`` with ``nsteps`` RK4 steps of size ``h``.

    Returns all nodes, shape ``(nsteps + 1,) + y0.shape``, or only the last
    node when ``store`` is false.  ``callback(k, t_k, y_k)`` is invoked on
    every node, which lets callers reduce along the trajectory without
    keeping it in memory.
    """
    y = np.array(y0, dtype=float)
    out = np.empty((nsteps + 1,) + y.shape) if store else None
    if store:
        out[0] = y
    if callback is not None:
        callback(0, t0, y)
    t = t0
    h2 = 0.5 * h
    for k in range(nsteps):
        k1 = rhs(y, t)
        k2 = rhs(y + h2 * k1, t + h2)
        k3 = rhs(y + h2 * k2, t + h2)
        k4 = rhs(y + h * k3, t + h)
        y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        t = t0 + (k + 1) * h
        if store:
            out[k + 1] = y
        if callback is not None:
            callback(k + 1, t, y)
    if store:
        finite = np.all(np.isfinite(out.reshape(nsteps + 1, -1)), axis=1)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise NonFinite(f"state became non-finite at step {bad} of {nsteps} "
                            "(backward blow-up or step too coarse)")
        return out
    if not np.all(np.isfinite(y)):
        raise NonFinite(f"state became non-finite within {nsteps} steps "
                        "(backward blow-up or step too coarse)")
    return y


def time_grid(cfg, t, s):
    nsteps = cfg.num_steps(s - t)
    h = abs(s - t) / nsteps if nsteps else 0.0
    direction = 1.0 if s >= t else -1.0
    return nsteps, h, t + direction * h * np.arange(nsteps + 1)


def integrate_flow(model, x, t, s, cfg=IntegratorConfig()):
    """Solution ``X(x, t; s)`` sampled on the step grid from ``t`` to ``s``.

    ``x`` may be a single state or a stack ``(m, n)``; the trajectory values
    then have shape ``(N + 1, m, n)``.  ``s < t`` integrates backward.
    """
    x = np.asarray(x, dtype=float)
    nsteps, h, times = time_grid(cfg, t, s)
    if s >= t:
        states = rk4(model.rhs, x, t, h, nsteps)
    else:
        states = rk4(lambda y, tau: -model.rhs(y, t - tau), x, 0.0, h, nsteps)
    return Trajectory(SampledSignal(times, states, uniform=True), float(t), x.copy())


def output_along_flow(model, x, t, window, cfg=IntegratorConfig()):
    """``Y(x, t; s) = h(X(x, t; s))`` for ``s`` over ``window = (t - t_star, t)``.

    The returned signal is ordered by increasing ``s``.
    """
    lo, hi = window
    if lo < 0 or hi < 0:
        raise ValueError("window endpoints must be nonnegative")
    x = np.asarray(x, dtype=float)
    if hi != t:
        x = integrate_flow(model, x, t, hi, cfg).end
    traj = integrate_flow(model, x, hi, lo, cfg)
    ys = model.output(traj.states)
    return SampledSignal(traj.times[::-1], ys[::-1], uniform=True)


@dataclass(frozen=True)
class VariationalFlow:
    """Base trajectory plus the sensitivities ``dX/dx(x, t; s)`` on its grid."""

    base: Trajectory
    jac: np.ndarray

    @property
    def times(self):
        return self.base.times


def variational_rhs(model, t, sign, batch):
    """Right-hand side of the plant plus variational system in ``tau``.

    The physical time is ``t + sign * tau``; the packed state is
    ``[X, vec(dX)]`` along the last axis.
    """
    n = model.n

    def aug(y, tau):
        time = t + sign * tau
        xs = y[..., :n]
        J = y[..., n:].reshape(batch + (n, n))
        dx = model.rhs(xs, time)
        dJ = model.jac_f(xs, time) @ J
        return sign * np.concatenate([dx, dJ.reshape(batch + (n * n,))], axis=-1)

    return aug


def pack_identity(x, n):
    batch = x.shape[:-1]
    eye = np.broadcast_to(np.eye(n), batch + (n, n)).reshape(batch + (n * n,))
    return np.concatenate([x, eye], axis=-1)


def variational_flow(model, x, t, s, cfg=IntegratorConfig()):
    """Integrate the plant together with its variational system.

    The augmented state carries ``X`` and the ``n x n`` matrix ``dX``
    (column ``j`` is the response to a perturbation of ``x_j``) with
    ``dX(t) = I``.  Uses the analytic ``df_dx`` when the model has one,
    central differences otherwise.
    """
    x = np.asarray(x, dtype=float)
    n = model.n
    sign = 1.0 if s >= t else -1.0
    nsteps, h, times = time_grid(cfg, t, s)
    ys = rk4(variational_rhs(model, t, sign, x.shape[:-1]), pack_identity(x, n), 0.0, h, nsteps)
    states = ys[..., :n]
    jac = ys[..., n:].reshape(ys.shape[:-1] + (n, n))
    base = Trajectory(SampledSignal(times, states, uniform=True), float(t), x.copy())
    return VariationalFlow(base, jac)
