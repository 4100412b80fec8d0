"""Identification of the constant offset ``theta`` and state reconstruction.

Along a plant run ``phi(x(t), t) = zeta(t) + theta``, so the measured
output obeys the regression ``y(t) = h(phi_L(zeta(t) + theta, t))``.  The
cost

    J(theta_hat) = int |y - h(phi_L(zeta + theta_hat, tau))|^2 dtau

vanishes at the true offset and is minimised with the simplex search.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .simplex import SimplexConfig, initial_simplex, minimize_batch
from .transform import LeftInverseConfig, left_inverse, left_inverse_path

MAX_COST_NODES = 200
PENALTY = 1e6


def _stride(intervals, max_nodes):
    """Smallest divisor ``K`` of ``intervals`` leaving at most ``max_nodes`` nodes."""
    if intervals <= 0:
        return 1
    for k in range(1, intervals + 1):
        if intervals % k == 0 and intervals // k + 1 <= max_nodes:
            return k
    return intervals


@dataclass(frozen=True)
class RegressionDataset:
    """Samples ``(t_k, y_k, zeta_k)`` plus the transform used to invert them.

    Cost nodes are every ``stride``-th sample counted from the first one.
    By default the stride is the smallest divisor of the interval count
    that keeps at most 200 nodes, so the last sample is always a node.

    :param times: uniform increasing grid
    :param y: output samples, ``(N, p)``
    :param zeta: extension samples, ``(N, n_z)``
    :param evaluator: :class:`~pebo.transform.TransformEvaluator`
    :param box: state domain used by the left inverse
    """

    times: np.ndarray
    y: np.ndarray
    zeta: np.ndarray
    evaluator: object
    box: object
    linv: LeftInverseConfig = LeftInverseConfig()
    stride: int | None = None
    max_nodes: int = MAX_COST_NODES

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        y = np.asarray(self.y, dtype=float)
        zeta = np.asarray(self.zeta, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if times.size == 0:
            raise ValueError("dataset is empty")
        if not (y.shape[0] == zeta.shape[0] == times.size):
            raise ValueError("times, y and zeta must share the grid")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "zeta", zeta)
        if self.stride is None:
            object.__setattr__(self, "stride", _stride(times.size - 1, self.max_nodes))

    @classmethod
    def from_run(cls, y_signal, extension_run, evaluator, box, t_start=None, **kw):
        """Pair a measured output with an extension run on the same grid."""
        times = y_signal.times
        keep = np.ones(times.size, bool) if t_start is None else times >= t_start - 1e-9
        return cls(times[keep], y_signal.values[keep], extension_run.zeta.values[keep],
                   evaluator, box, **kw)

    @property
    def n_z(self):
        return self.zeta.shape[1]

    def nodes(self):
        return np.arange(0, self.times.size, self.stride)

    def window(self, t_start, t_end):
        """Samples in ``[t_start, t_end]`` with the parent's stride."""
        keep = (self.times >= t_start - 1e-9) & (self.times <= t_end + 1e-9)
        return replace(self, times=self.times[keep], y=self.y[keep], zeta=self.zeta[keep],
                       stride=self.stride)


@dataclass
class EstimatorConfig:
    """Settings of the identification problem.

    :param theta0: initial guess (zero vector when ``None``)
    :param constrained: charge a penalty wherever ``zeta + theta_hat`` has
        no exact preimage; the default unconstrained form inverts by
        projection onto the image instead
    :param max_evals: simplex budget (``200 * n_z`` when ``None``)
    :param f_target: costs at or below this count as an exact fit
    :param start_steps: initial simplex edge lengths tried in turn from
        ``theta0``; ``None`` means the default relative simplex.  The
        lowest final cost wins.  The cost is non-smooth where the inverse
        switches branches, and a single simplex can stall on such a kink.
    """

    theta0: np.ndarray | None = None
    constrained: bool = False
    simplex: SimplexConfig = field(default_factory=SimplexConfig)
    max_evals: int | None = None
    f_target: float = 1e-24
    start_steps: tuple = (None, 1e-3, 1e-2, 3e-2)

    def settings(self, n_z):
        max_evals = self.max_evals if self.max_evals is not None else 200 * n_z
        if max_evals < n_z + 1:
            raise ValueError("max_evals must be at least n_z + 1")
        return replace(self.simplex, max_evals=max_evals, f_target=self.f_target)


@dataclass
class EstimationResult:
    theta_hat: np.ndarray
    cost: float
    evals: int
    hit_max_evals: bool = False
    trace: list = field(default_factory=list)   # (t, theta_hat, cost) per update

    def trace_arrays(self):
        if not self.trace:
            return np.empty(0), np.empty((0, self.theta_hat.size)), np.empty(0)
        t, th, c = zip(*self.trace)
        return np.array(t), np.array(th), np.array(c)


def invert_dataset(dataset, theta_hat, constrained=False):
    """``phi_L(zeta_k + theta_hat, t_k)`` at the cost nodes.

    :returns: ``(indices, states, status)``
    """
    idx = dataset.nodes()
    Z = dataset.zeta[idx] + np.asarray(theta_hat, dtype=float)
    X, _, status = left_inverse_path(dataset.evaluator, Z, dataset.times[idx], dataset.box,
                                     dataset.linv, strict=constrained)
    return idx, X, status


def cost_J(dataset, theta_hat, constrained=False):
    """Trapezoid approximation of ``J(theta_hat)`` on the cost nodes.

    In the constrained form a node whose target has no exact preimage
    contributes ``1e6 * (1 + |z|^2)`` in place of its residual.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    idx, X, status = invert_dataset(dataset, theta_hat, constrained)
    model = dataset.evaluator.model
    r = dataset.y[idx] - model.output(X)
    g = np.sum(r * r, axis=-1)
    if constrained:
        bad = np.array([s != "ok" for s in status])
        if bad.any():
            Z = dataset.zeta[idx[bad]] + theta_hat
            g[bad] = PENALTY * (1.0 + np.sum(Z * Z, axis=-1))
    if idx.size == 1:
        return float(g[0])
    t = dataset.times[idx]
    return float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(t)))


def nelder_mead(costfn, theta0, cfg=EstimatorConfig()):
    """Minimise a scalar cost of ``n_z`` variables with the simplex method."""
    theta0 = np.asarray(theta0, dtype=float)
    sc = cfg.settings(theta0.size)

    def batched(points, which):
        return np.array([costfn(p) for p in points])

    best, evals = None, 0
    for step in cfg.start_steps or (None,):
        res = minimize_batch(batched, initial_simplex(theta0, sc, step)[None], sc)
        evals += int(res.evals[0])
        if best is None or res.fun[0] < best.fun[0]:
            best = res
        if best.fun[0] <= sc.f_target:
            break
    return EstimationResult(best.x[0].copy(), float(best.fun[0]), evals,
                            bool(best.hit_max_evals[0]))


def batch_estimate(dataset, cfg=EstimatorConfig()):
    """One simplex solve of ``J`` over the whole dataset."""
    theta0 = np.zeros(dataset.n_z) if cfg.theta0 is None else np.asarray(cfg.theta0, dtype=float)
    return nelder_mead(lambda th: cost_J(dataset, th, cfg.constrained), theta0, cfg)


def expanding_windows(dataset, period, t_start=None):
    """Windows ``[t_start, t_start + k * period]`` up to the last sample."""
    t0 = dataset.times[0] if t_start is None else t_start
    tf = dataset.times[-1]
    count = int(np.floor((tf - t0) / period + 1e-9))
    ends = t0 + period * np.arange(1, count + 1)
    if count == 0 or ends[-1] < tf - 1e-9:
        ends = np.append(ends, tf)
    return [dataset.window(t0, te) for te in ends]


def expanding_horizon_estimate(datasets, cfg=EstimatorConfig()):
    """Re-solve on each window, warm-starting from the previous estimate.

    :param datasets: iterable of windows, e.g. from :func:`expanding_windows`
    """
    theta = None if cfg.theta0 is None else np.asarray(cfg.theta0, dtype=float)
    trace, total, res = [], 0, None
    for ds in datasets:
        if theta is None:
            theta = np.zeros(ds.n_z)
        res = nelder_mead(lambda th, ds=ds: cost_J(ds, th, cfg.constrained), theta, cfg)
        theta = res.theta_hat
        total += res.evals
        trace.append((float(ds.times[-1]), theta.copy(), res.cost))
    if res is None:
        raise ValueError("no windows supplied")
    return EstimationResult(theta.copy(), res.cost, total, res.hit_max_evals, trace)


def reconstruct_state(evaluator, zeta, theta_hat, t, box, cfg=LeftInverseConfig(), **kw):
    """``x_hat = phi_L(zeta + theta_hat, t)``; errors propagate from the left inverse."""
    z = np.asarray(zeta, dtype=float) + np.asarray(theta_hat, dtype=float)
    return left_inverse(evaluator, z, t, box, cfg, **kw)


def reconstruct_trajectory(evaluator, times, zeta, theta_hat, box, cfg=LeftInverseConfig()):
    """``x_hat`` at every grid time, tracking the solution between samples.

    Targets off the image are projected (best approximant), so an imperfect
    ``theta_hat`` still yields a trace.
    """
    Z = np.asarray(zeta, dtype=float) + np.asarray(theta_hat, dtype=float)
    X, _, _ = left_inverse_path(evaluator, Z, times, box, cfg, strict=False)
    return X
