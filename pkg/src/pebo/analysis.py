"""Observability and identifiability diagnostics.

* ``observability_matrix`` stacks ``h`` and its first ``k`` total time
  derivatives along the flow and reports the rank of their state Jacobian.
* ``distinguishability_probe`` compares output histories of state pairs.
* ``gramian_W_phi`` integrates the identifiability Gramian of the
  regression ``theta -> h(phi_L(zeta + theta, t))``.  Read as a Fisher
  information matrix it is the information about ``theta`` carried by
  unit-variance white output noise.
* ``injectivity_sweep`` measures the round-trip failure rate of the left
  inverse and estimates the time after which the transform is injective.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import IllConditioned, RankDeficientPsi
from .flows import IntegratorConfig, integrate_flow, output_along_flow, variational_flow
from .tables import parallel_map, write_csv
from .transform import LeftInverseConfig, left_inverse_many

RANK_TOL = 1e-8
MAX_ORDER = 3


def _rank(sv, tol):
    smax = sv[..., :1]
    return np.sum(sv > tol * np.where(smax > 0, smax, np.inf), axis=-1)


def _report_rows(states, ranks, sv):
    return [states[:, j] for j in range(states.shape[1])] + [ranks, sv[:, -1], sv[:, 0]]


# --------------------------------------------------------------------------
# observability matrix
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ObsConfig:
    """Settings of the observability-matrix differencing.

    :param delta: spacing of the time stencil (a multiple of the step)
    :param integrator: integrator used for the flow and its sensitivities
    :param rank_tol: relative singular-value cutoff
    """

    delta: float = 1e-2
    integrator: IntegratorConfig = IntegratorConfig()
    rank_tol: float = RANK_TOL


def _stencil_weights(m, delta, k):
    """Central weights on ``j * delta``, ``j = -m..m``, for derivatives ``0..k``."""
    nodes = np.arange(-m, m + 1) * delta
    V = np.vander(nodes, increasing=True).T              # V[i, j] = nodes_j ** i
    W = np.zeros((k + 1, nodes.size))
    fact = 1.0
    for j in range(k + 1):
        rhs = np.zeros(nodes.size)
        rhs[j] = fact
        W[j] = np.linalg.solve(V, rhs)
        fact *= j + 1
    return W


@dataclass
class ObsMatrixReport:
    """``O_k`` and the rank of its state Jacobian on a set of states.

    :ivar values: ``(m, (k + 1) p)``
    :ivar jacobians: ``(m, (k + 1) p, n)``
    :ivar singular_values: ``(m, min((k + 1) p, n))``, descending
    """

    k: int
    t: float
    states: np.ndarray
    values: np.ndarray
    jacobians: np.ndarray
    singular_values: np.ndarray
    ranks: np.ndarray
    rank_tol: float = RANK_TOL

    @property
    def n(self):
        return self.states.shape[1]

    def deficient(self):
        return self.ranks < self.n

    def to_csv(self, path):
        head = [f"x{j + 1}" for j in range(self.n)] + ["rank", "sigma_min", "sigma_max"]
        return write_csv(path, head, _report_rows(self.states, self.ranks, self.singular_values))


def observability_matrix(model, x, t, k, cfg=ObsConfig()):
    """``O_k(x, t) = (h, D h, ..., D^k h)`` and ``dO_k/dx``.

    ``D^j h`` is the ``j``-th derivative of ``s -> h(X(x, t; s))`` at
    ``s = t``, taken by a central stencil on the flow.  The Jacobian
    differentiates the same stencil through the sensitivities
    ``dX/dx``, so no differencing in ``x`` is needed.

    :param x: state or stack of states ``(m, n)``
    :raises ValueError: ``k`` outside ``0..3``
    """
    if not 0 <= k <= MAX_ORDER:
        raise ValueError(f"order k must lie in 0..{MAX_ORDER}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, p = model.n, model.p
    if k == 0:
        vals = model.output(x)
        jac = model.jac_h(x)
    else:
        m = k + 1
        span = m * cfg.delta
        fwd = variational_flow(model, x, t, t + span, cfg.integrator)
        bwd = variational_flow(model, x, t, t - span, cfg.integrator)
        stride = cfg.integrator.num_steps(cfg.delta)
        if cfg.integrator.num_steps(span) != m * stride:
            raise ValueError("delta must be a multiple of the integrator step")
        idx = np.arange(0, m * stride + 1, stride)
        X = np.concatenate([bwd.base.states[idx[:0:-1]], fwd.base.states[idx]])   # (2m+1, M, n)
        S = np.concatenate([bwd.jac[idx[:0:-1]], fwd.jac[idx]])
        Y = model.output(X)                                           # (2m+1, M, p)
        dY = model.jac_h(X) @ S                                       # (2m+1, M, p, n)
        W = _stencil_weights(m, cfg.delta, k)
        vals = np.einsum("js,smp->mjp", W, Y).reshape(x.shape[0], (k + 1) * p)
        jac = np.einsum("js,smpn->mjpn", W, dY).reshape(x.shape[0], (k + 1) * p, n)
        noise = np.finfo(float).eps * np.max(np.abs(Y)) * np.sum(np.abs(W[-1]))
        if noise > 1e-6 * max(np.max(np.abs(vals[:, -p:])), 1e-300):
            warnings.warn(f"order-{k} differencing noise {noise:.1e} is large relative "
                          "to the derivative", IllConditioned, stacklevel=2)
    sv = np.linalg.svd(jac, compute_uv=False)
    return ObsMatrixReport(k, float(t), x, vals, jac, sv, _rank(sv, cfg.rank_tol), cfg.rank_tol)


@dataclass
class RankSweep:
    """Rank verdicts along a one-coordinate sweep.

    ``flagged`` marks points whose Jacobian is rank-deficient by the
    singular-value test or which sit next to a sign change of the
    determinant (square Jacobians only); of the two points bracketing a
    sign change, the one with the smaller relative singular value is
    marked.  ``roots`` are the determinant zeros refined by bracketing.
    """

    report: ObsMatrixReport
    axis: int
    values: np.ndarray
    det: np.ndarray
    flagged: np.ndarray
    roots: np.ndarray


def rank_sweep(model, base, axis, values, t, k=1, cfg=ObsConfig(), xtol=1e-12):
    """Sweep coordinate ``axis`` of ``base`` over ``values`` and locate rank loss."""
    values = np.asarray(values, dtype=float)
    states = np.repeat(np.asarray(base, dtype=float)[None], values.size, axis=0)
    states[:, axis] = values
    rep = observability_matrix(model, states, t, k, cfg)
    flagged = rep.deficient().copy()
    square = rep.jacobians.shape[-1] == rep.jacobians.shape[-2]
    roots = []
    if square:
        det = np.linalg.det(rep.jacobians)
        rel = rep.singular_values[:, -1] / np.maximum(rep.singular_values[:, 0], 1e-300)
        sign = np.sign(det)

        def det_at(v):
            xs = np.asarray(base, dtype=float).copy()
            xs[axis] = v
            return float(np.linalg.det(observability_matrix(model, xs, t, k, cfg).jacobians[0]))

        for i in np.flatnonzero(sign == 0):
            roots.append(values[i])
        for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
            flagged[i if rel[i] <= rel[i + 1] else i + 1] = True
            roots.append(brentq(det_at, values[i], values[i + 1], xtol=xtol))
    else:
        det = np.full(values.size, np.nan)
    return RankSweep(rep, axis, values, det, flagged, np.sort(np.array(roots)))


# --------------------------------------------------------------------------
# distinguishability
# --------------------------------------------------------------------------

@dataclass
class DistinguishabilityProbe:
    """Sup-norm gaps between output histories over ``[t - t_star, t]``."""

    pairs: np.ndarray            # (m, 2, n)
    window: tuple
    gaps: np.ndarray             # (m,)
    threshold: float = 1e-8

    def violations(self):
        """Indices of distinct pairs whose outputs stay within the threshold."""
        distinct = np.any(self.pairs[:, 0] != self.pairs[:, 1], axis=-1)
        return np.flatnonzero(distinct & (self.gaps < self.threshold))


def distinguishability_probe(model, pairs, t, t_star, cfg=IntegratorConfig(), threshold=1e-8):
    """Largest output difference over the backward window for each pair.

    :param pairs: ``(m, 2, n)`` array of ``(x_a, x_b)``
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim == 2:
        pairs = pairs[None]
    window = (t - t_star, t)
    m = pairs.shape[0]
    stack = pairs.reshape(2 * m, -1)
    Y = output_along_flow(model, stack, t, window, cfg).values     # (N, 2m, p)
    Y = Y.reshape(Y.shape[0], m, 2, -1)
    gaps = np.max(np.abs(Y[:, :, 0] - Y[:, :, 1]), axis=(0, 2))
    return DistinguishabilityProbe(pairs, window, gaps, threshold)


# --------------------------------------------------------------------------
# identifiability Gramian
# --------------------------------------------------------------------------

@dataclass
class GramianReport:
    """``W = int (dh psi^+)^T (dh psi^+) dtau`` along the run through ``x``.

    ``W`` acts on the offset, so it is ``n_z x n_z``.  As a Fisher
    information matrix it measures what unit-variance white output noise
    leaves known about the offset.

    :ivar deficient_times: nodes where ``psi`` lost column rank
    :ivar verdict: ``"nonsingular"`` or ``"singular"``
    """

    x: np.ndarray
    t_start: float
    T: float
    W: np.ndarray
    eigenvalues: np.ndarray
    deficient_times: np.ndarray
    deficient_fraction: float
    tol: float
    verdict: str

    @property
    def nonsingular(self):
        return self.verdict == "nonsingular"

    def to_csv(self, path):
        k = self.W.shape[0]
        cols = [np.arange(k), self.eigenvalues] + [self.W[:, j] for j in range(k)]
        head = ["index", "eigenvalue"] + [f"W{j + 1}" for j in range(k)]
        return write_csv(path, head, cols)


def gramian_W_phi(model, design, x, T, cfg=IntegratorConfig(), evaluator=None, t_start=0.1,
                  nodes=91, tol=RANK_TOL, max_deficient=0.05, raise_deficient=False):
    """Identifiability Gramian on ``[t_start, T]`` along the plant run.

    ``x`` is the plant state at ``t_start``; ``psi`` is evaluated on
    ``nodes`` equally spaced times and the outer integral is a trapezoid.
    The pseudo-inverse drops singular values below ``tol`` times the
    largest.  The verdict is nonsingular when the smallest eigenvalue
    exceeds ``tol`` times the largest and ``psi`` keeps full column rank
    on all but ``max_deficient`` of the nodes.

    :param evaluator: transform evaluator (quadrature built when ``None``)
    :param t_start: lower end of the window, at or after the injectivity time
    :raises RankDeficientPsi: only with ``raise_deficient=True``
    """
    if not T > t_start:
        raise ValueError("need T > t_start")
    if evaluator is None:
        from .transform import QuadratureTransform
        evaluator = QuadratureTransform(model, design, cfg)
    x = np.asarray(x, dtype=float)
    taus = np.linspace(t_start, T, nodes)
    traj = integrate_flow(model, x, t_start, T, cfg)
    step_idx = np.rint((taus - t_start) / (T - t_start) * (traj.times.size - 1)).astype(int)
    X = traj.states[step_idx]
    G = np.empty((nodes, design.n_z, design.n_z))
    bad = np.zeros(nodes, bool)
    for i, (tau, xi) in enumerate(zip(taus, X)):
        psi = evaluator.jacobian(xi, tau)                       # (n_z, n)
        U, s, Vt = np.linalg.svd(psi, full_matrices=False)
        keep = s > tol * s[0] if s[0] > 0 else np.zeros_like(s, bool)
        bad[i] = not np.all(keep)
        pinv = (Vt[keep].T / s[keep]) @ U[:, keep].T            # (n, n_z)
        D = model.jac_h(xi) @ pinv                              # (p, n_z)
        G[i] = D.T @ D
    W = np.trapezoid(G, taus, axis=0) if hasattr(np, "trapezoid") else np.trapz(G, taus, axis=0)
    W = 0.5 * (W + W.T)
    ev = np.linalg.eigvalsh(W)
    frac = float(bad.mean())
    if frac > max_deficient and raise_deficient:
        raise RankDeficientPsi(f"psi rank-deficient on {frac:.0%} of the window", taus[bad])
    ok = ev[0] > tol * ev[-1] and ev[-1] > 0 and frac <= max_deficient
    return GramianReport(x, float(t_start), float(T), W, ev, taus[bad], frac, tol,
                         "nonsingular" if ok else "singular")


# --------------------------------------------------------------------------
# injectivity
# --------------------------------------------------------------------------

@dataclass
class InjectivityReport:
    """Round-trip failure rate of the left inverse per time.

    ``t_star`` is the earliest grid time from which every later grid time
    has no failures (``nan`` when the last time still fails).
    """

    t_grid: np.ndarray
    failure_rate: np.ndarray
    max_error: np.ndarray
    t_star: float
    states: np.ndarray = field(repr=False, default=None)

    def to_csv(self, path):
        return write_csv(path, ["t", "failure_rate", "max_error"],
                         [self.t_grid, self.failure_rate, self.max_error])


def injectivity_sweep(evaluator, box, t_grid, cfg=None, grid=9, tol=1e-5, workers=None,
                      states=None):
    """Check ``left_inverse(phi(x, t), t) == x`` on a ``grid x ... x grid`` state grid.

    A state fails when the inverse raises (non-unique or no exact
    minimizer) or lands farther than ``tol`` from it.

    :param cfg: left-inverse settings; by default an evaluator with an
        exact structured solver uses the round-off floor ``tol_cost=1e-20``
        (a looser floor lets flat directions pass as ties), others the
        standard settings
    :param states: explicit test states in place of the tensor grid
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if cfg is None:
        structured = evaluator.candidates(evaluator.phi(box.lower, 1.0), 1.0, box) is not None
        cfg = LeftInverseConfig(tol_cost=1e-20) if structured else LeftInverseConfig()
    states = box.grid(grid) if states is None else np.atleast_2d(np.asarray(states, float))

    def one(t):
        Z = evaluator.phi(states, t)
        X, status = left_inverse_many(evaluator, Z, t, box, cfg, strict=True)
        err = np.max(np.abs(X - states), axis=-1)
        fail = np.array([s != "ok" for s in status]) | ~(err <= tol)
        ok_err = err[~fail]
        return fail.mean(), (ok_err.max() if ok_err.size else np.nan)

    out = parallel_map(one, t_grid, workers)
    rate = np.array([o[0] for o in out])
    err = np.array([o[1] for o in out])
    order = np.argsort(t_grid)
    t_star = np.nan
    for i in order[::-1]:
        if rate[i] > 0:
            break
        t_star = t_grid[i]
    return InjectivityReport(t_grid, rate, err, float(t_star), states)
