"""Nelder-Mead simplex search, vectorised over independent problems.

Many small problems (e.g. the seeds of a multi-start search) advance in
lockstep so that one call of the objective evaluates a whole batch of
points.  A single problem is just a batch of size one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SimplexConfig:
    """Coefficients and stopping rules.

    :param alpha: reflection coefficient
    :param gamma: expansion coefficient
    :param rho: contraction coefficient
    :param sigma: shrink coefficient
    :param xtol: simplex diameter tolerance (max-norm distance of the
        vertices from the best one)
    :param ftol: tolerance on ``f_worst - f_best``; a problem converges
        once both the diameter and the spread are below tolerance
    :param max_evals: evaluation budget per problem; ``None`` means
        ``200 * dim``
    :param rel_step: initial edge as a fraction of each nonzero coordinate
    :param zero_step: initial edge for zero coordinates
    :param f_target: stop as soon as the best value is at or below this
        (useful for nonnegative costs whose exact minimum is known)
    """

    alpha: float = 1.0
    gamma: float = 2.0
    rho: float = 0.5
    sigma: float = 0.5
    xtol: float = 1e-10
    ftol: float = 1e-12
    max_evals: int | None = None
    rel_step: float = 0.05
    zero_step: float = 0.00025
    f_target: float | None = None


@dataclass
class SimplexResult:
    x: np.ndarray          # (M, d) best vertex per problem
    fun: np.ndarray        # (M,)
    evals: np.ndarray      # (M,)
    hit_max_evals: np.ndarray  # (M,) bool
    simplex: np.ndarray    # (M, d + 1, d) final simplices, sorted


def initial_simplex(x0, cfg, step=None):
    """Axis-aligned simplex around ``x0`` (shape ``(d,)``)."""
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    if step is None:
        step = np.where(x0 != 0.0, cfg.rel_step * np.abs(x0), cfg.zero_step)
    step = np.broadcast_to(np.asarray(step, dtype=float), (d,))
    S = np.repeat(x0[None, :], d + 1, axis=0)
    S[1:] += np.diag(step)
    return S


def _sort(S, F):
    # primary key cost, ties broken by lexicographically smallest vertex
    M, k, d = S.shape
    owner = np.repeat(np.arange(M), k)
    flatS = S.reshape(M * k, d)
    keys = [flatS[:, j] for j in range(d - 1, -1, -1)] + [F.ravel(), owner]
    order = np.lexsort(keys).reshape(M, k) - (np.arange(M) * k)[:, None]
    rows = np.arange(M)[:, None]
    S[:] = S[rows, order]
    F[:] = F[rows, order]


def minimize_batch(fun, simplices, cfg=SimplexConfig()):
    """Run Nelder-Mead on ``M`` problems at once.

    :param fun: ``fun(points, which) -> costs`` where ``points`` is
        ``(k, d)`` and ``which`` holds the problem index of each row
    :param simplices: initial simplices, shape ``(M, d + 1, d)``
    """
    S = np.array(simplices, dtype=float)
    M, k, d = S.shape
    if k != d + 1:
        raise ValueError("each simplex needs d + 1 vertices")
    max_evals = cfg.max_evals if cfg.max_evals is not None else 200 * d
    allidx = np.arange(M)

    F = np.asarray(fun(S.reshape(-1, d), np.repeat(allidx, k)), dtype=float).reshape(M, k)
    evals = np.full(M, k)
    active = np.ones(M, dtype=bool)

    while True:
        _sort(S, F)
        diam = np.max(np.abs(S[:, 1:] - S[:, :1]), axis=(1, 2))
        spread = F[:, -1] - F[:, 0]
        done = ((diam < cfg.xtol) & (spread < cfg.ftol)) | (evals >= max_evals)
        if cfg.f_target is not None:
            done |= F[:, 0] <= cfg.f_target
        done |= ~np.all(np.isfinite(S), axis=(1, 2))
        active &= ~done
        idx = allidx[active]
        if idx.size == 0:
            break

        Sa, Fa = S[idx], F[idx]
        c = Sa[:, :-1].mean(axis=1)
        xw = Sa[:, -1]
        xr = c + cfg.alpha * (c - xw)
        fr = np.asarray(fun(xr, idx), dtype=float)
        evals[idx] += 1
        f0, fs, fw = Fa[:, 0], Fa[:, -2], Fa[:, -1]

        expand = fr < f0
        accept = (fr >= f0) & (fr < fs)
        outside = (fr >= fs) & (fr < fw)
        inside = fr >= fw

        trial = np.where(expand[:, None], c + cfg.gamma * (xr - c),
                         np.where(outside[:, None], c + cfg.rho * (xr - c),
                                  c + cfg.rho * (xw - c)))
        second = ~accept
        ft = np.full(idx.size, np.inf)
        if second.any():
            ft[second] = fun(trial[second], idx[second])
            evals[idx[second]] += 1

        new_x = xr.copy()
        new_f = fr.copy()
        take_e = expand & (ft < fr)
        new_x[take_e], new_f[take_e] = trial[take_e], ft[take_e]
        take_oc = outside & (ft <= fr)
        take_ic = inside & (ft < fw)
        new_x[take_oc | take_ic] = trial[take_oc | take_ic]
        new_f[take_oc | take_ic] = ft[take_oc | take_ic]
        shrink = (outside & ~take_oc) | (inside & ~take_ic)

        keep = ~shrink
        Sa[keep, -1] = new_x[keep]
        Fa[keep, -1] = new_f[keep]
        if shrink.any():
            sidx = np.flatnonzero(shrink)
            best = Sa[sidx, :1]
            Sa[sidx, 1:] = best + cfg.sigma * (Sa[sidx, 1:] - best)
            pts = Sa[sidx, 1:].reshape(-1, d)
            Fa[sidx, 1:] = np.asarray(fun(pts, np.repeat(idx[sidx], d)), dtype=float).reshape(-1, d)
            evals[idx[sidx]] += d
        S[idx], F[idx] = Sa, Fa

    return SimplexResult(S[:, 0].copy(), F[:, 0].copy(), evals, evals >= max_evals, S)


def minimize(fun, x0, cfg=SimplexConfig(), step=None):
    """Single-problem convenience wrapper; ``fun`` maps a vector to a scalar."""
    S = initial_simplex(x0, cfg, step)[None]

    def batched(points, which):
        return np.array([fun(p) for p in points])

    return minimize_batch(batched, S, cfg)
