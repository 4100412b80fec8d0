"""Coordinate change ``z = phi(x, t)`` turning the plant into ``z' = beta(y, t)``.

The quadrature-built transform follows the two-step construction

    T(x, t)   = int_0^t exp(A (t - s)) B H(h(X(x, t; s)), s) ds
    phi(x, t) = exp(-A t) T(x, t)

with ``beta(y, t) = exp(-A t) B H(y, t)``.  Both ``T`` and the state
Jacobian ``psi = d phi / d x`` are accumulated with the composite trapezoid
rule on the nodes of a single backward RK4 pass, so no interpolation is
involved.
"""
from __future__ import annotations

import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import BadEigenvalue, NoSolution, NonInjective
from .expm import expm, is_diagonal
from .flows import IntegratorConfig, pack_identity, rk4, variational_rhs
from .simplex import SimplexConfig, minimize_batch


# --------------------------------------------------------------------------
# design
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OutputReshaping:
    """Output reshaping ``H(y, t)``, applied componentwise.

    ``kind`` is ``"identity"``, ``"exp_decay"`` (``exp(-rho t) y``) or
    ``"custom"``; a custom map supplies ``func(y, t)`` and optionally its
    Jacobian ``jac(y, t) -> (p, p)`` and ``inverse(v, t)``.
    """

    kind: str = "identity"
    rho: float = 0.0
    func: Optional[Callable] = None
    jac: Optional[Callable] = None
    inverse_func: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("identity", "exp_decay", "custom"):
            raise ValueError(f"unknown output reshaping {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom reshaping needs func")

    def __call__(self, y, t):
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y
        if self.kind == "exp_decay":
            return np.exp(-self.rho * t) * y
        return np.asarray(self.func(y, t), dtype=float)

    def gain(self, y, t):
        """``dH/dy`` at ``(y, t)``, shape ``y.shape + (p,)``."""
        y = np.asarray(y, dtype=float)
        p = y.shape[-1]
        if self.kind in ("identity", "exp_decay"):
            scale = 1.0 if self.kind == "identity" else np.exp(-self.rho * t)
            return np.broadcast_to(scale * np.eye(p), y.shape[:-1] + (p, p))
        if self.jac is not None:
            return np.asarray(self.jac(y, t), dtype=float)
        from .system import fd_jacobian
        return fd_jacobian(self.func, y, t)

    def inverse(self, v, t):
        v = np.asarray(v, dtype=float)
        if self.kind == "identity":
            return v
        if self.kind == "exp_decay":
            return np.exp(self.rho * t) * v
        if self.inverse_func is None:
            raise NotImplementedError("custom reshaping has no inverse")
        return np.asarray(self.inverse_func(v, t), dtype=float)

    def roundtrip_error(self, samples, times):
        """Max ``|H^-1(H(y, t), t) - y|`` over sample pairs (bijectivity check)."""
        errs = [np.max(np.abs(self.inverse(self(y, t), t) - y)) for y, t in zip(samples, times)]
        return float(max(errs)) if errs else 0.0


@dataclass(frozen=True)
class ObserverDesign:
    """Synthesis choices ``(A, B, rho, H)`` with the block structure

    ``A = blockdiag(Lambda, ..., Lambda)`` (``p`` copies of
    ``Lambda = diag(lambdas)``) and ``B = blockdiag(1, ..., 1)`` with
    all-ones columns of length ``n + 1``.
    """

    n: int
    p: int
    lambdas: np.ndarray
    A: np.ndarray
    B: np.ndarray
    rho: float
    H: OutputReshaping
    n_z: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_z", self.A.shape[0])

    def beta(self, y, t):
        """``exp(-A t) B H(y, t)`` for a single time ``t`` (``y`` may be stacked)."""
        Hy = self.H(y, t)
        return Hy @ (expm(-self.A * t) @ self.B).T

    def shifted_hurwitz(self):
        """True when ``-(A + rho I)`` is Hurwitz."""
        ev = np.linalg.eigvals(-(self.A + self.rho * np.eye(self.n_z)))
        return bool(np.all(ev.real < 0))


def block_structure(n, p, lambdas):
    lam = np.asarray(lambdas, dtype=float)
    Lam = np.diag(lam)
    A = np.kron(np.eye(p), Lam)
    B = np.kron(np.eye(p), np.ones((n + 1, 1)))
    return A, B


def make_design(n, p, lambdas, rho=0.0, H="identity", jitter=0.0, rng=None):
    """Assemble an :class:`ObserverDesign`.

    :param lambdas: ``n + 1`` real, strictly negative eigenvalues
    :param H: ``"identity"``, ``"exp_decay"`` or an :class:`OutputReshaping`
    :param jitter: if positive, each eigenvalue is multiplied by
        ``1 + delta`` with ``delta ~ U[-jitter, jitter]`` drawn from ``rng``
    """
    lam = np.asarray(lambdas)
    if lam.ndim != 1 or lam.size != n + 1:
        raise ValueError(f"need exactly n + 1 = {n + 1} eigenvalues, got {lam.size}")
    if np.iscomplexobj(lam):
        if np.any(np.abs(lam.imag) > 0):
            raise BadEigenvalue("complex eigenvalues are not supported by the real block design")
        lam = lam.real
    lam = lam.astype(float)
    if np.any(~np.isfinite(lam)) or np.any(lam >= 0):
        raise BadEigenvalue(f"eigenvalues must have strictly negative real part: {lam}")
    if jitter:
        rng = np.random.default_rng() if rng is None else rng
        lam = lam * (1.0 + rng.uniform(-jitter, jitter, size=lam.size))
    if isinstance(H, str):
        H = OutputReshaping(H, rho=rho)
    A, B = block_structure(n, p, lam)
    return ObserverDesign(n, p, lam, A, B, float(rho), H)


# --------------------------------------------------------------------------
# evaluators
# --------------------------------------------------------------------------

class TransformEvaluator:
    """Common interface: ``phi``, ``jacobian`` and optional structured
    minimizer candidates for the left inverse.

    ``phi(x, t)`` accepts a state or a stack of states at one time.
    """

    kind = "abstract"
    pde_dt = 1e-5

    def __init__(self, model, design):
        self.model = model
        self.design = design

    def phi(self, x, t):
        raise NotImplementedError

    def jacobian(self, x, t):
        raise NotImplementedError

    def phi_and_jacobian(self, x, t):
        return self.phi(x, t), self.jacobian(x, t)

    def beta(self, y, t):
        return self.design.beta(y, t)

    def candidates(self, z, t, box):
        """Structured global search for ``argmin |z - phi(x, t)|^2``.

        Returns ``(points, costs)`` guaranteed to contain every global
        minimizer, or ``None`` when the evaluator has no such solver.
        """
        return None

    def candidates_many(self, Z, times, box):
        """Batched :meth:`candidates` for rows ``Z[i]`` at ``times[i]``;
        returns ``(points (M, K, n), costs (M, K))`` or ``None``."""
        return None


class _LRU:
    def __init__(self, maxsize):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        return None

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)


class QuadratureTransform(TransformEvaluator):
    """``phi`` built by quadrature along backward flows of the plant.

    :param rule: ``"trapezoid"`` (default) or ``"simpson"``; Simpson is
        used only when the node count is odd and falls back to the
        trapezoid rule otherwise
    """

    kind = "quadrature"

    def __init__(self, model, design, cfg=IntegratorConfig(), rule="trapezoid", cache_size=128):
        super().__init__(model, design)
        if rule not in ("trapezoid", "simpson"):
            raise ValueError("rule must be 'trapezoid' or 'simpson'")
        self.cfg = cfg
        self.rule = rule
        self.pde_dt = cfg.step
        self._cache = _LRU(cache_size)
        self._warned = False

    # -- core pass ----------------------------------------------------------
    def _pass(self, x, t, with_jacobian):
        """One backward pass from ``t`` to ``0``; returns ``(T, dT/dx or None)``."""
        model, design = self.model, self.design
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        n, n_z = model.n, design.n_z
        nsteps = self.cfg.num_steps(t)
        T = np.zeros(batch + (n_z,))
        dT = np.zeros(batch + (n_z, n)) if with_jacobian else None
        if nsteps == 0:
            return T, dT
        h = t / nsteps
        A, B = design.A, design.B
        diag = is_diagonal(A)
        lam = np.diagonal(A)
        Eh = None if diag else expm(A * h)
        weights = self._weights(nsteps, h)
        state = {"E": np.eye(n_z)}

        def reduce(k, tau, y):
            s = t - k * h
            if diag:
                EB = np.exp(lam * (k * h))[:, None] * B
            else:
                if k > 0:
                    state["E"] = state["E"] @ Eh
                EB = state["E"] @ B
            xs = y[..., :n]
            yk = model.output(xs)
            T[...] += weights[k] * (design.H(yk, s) @ EB.T)
            if with_jacobian:
                J = y[..., n:].reshape(batch + (n, n))
                G = design.H.gain(yk, s) @ model.jac_h(xs) @ J
                dT[...] += weights[k] * (EB @ G)

        if with_jacobian:
            rk4(variational_rhs(model, t, -1.0, batch), pack_identity(x, n), 0.0, h, nsteps,
                callback=reduce, store=False)
        else:
            rk4(lambda y, tau: -model.rhs(y, t - tau), x, 0.0, h, nsteps,
                callback=reduce, store=False)
        if not (np.all(np.isfinite(T)) and (dT is None or np.all(np.isfinite(dT)))):
            from .errors import NonFinite
            raise NonFinite("transform quadrature produced non-finite values")
        return T, dT

    def _weights(self, nsteps, h):
        w = np.full(nsteps + 1, h)
        if self.rule == "simpson" and nsteps % 2 == 0:
            w[1:-1:2] = 4.0 * h / 3.0
            w[2:-1:2] = 2.0 * h / 3.0
            w[0] = w[-1] = h / 3.0
        else:
            w[0] = w[-1] = 0.5 * h
        return w

    def _cached(self, x, t, with_jacobian):
        x = np.ascontiguousarray(x, dtype=float)
        key = (x.shape, x.tobytes(), float(t), self.cfg.step)
        hit = self._cache.get(key)
        if hit is not None and (hit[1] is not None or not with_jacobian):
            return hit
        out = self._pass(x, t, with_jacobian)
        self._cache.put(key, out)
        return out

    def _check_growth(self, t):
        if self.design.rho == 0.0 and not self._warned:
            if t * np.max(np.abs(self.design.lambdas)) > 10.0:
                self._warned = True
                warnings.warn("exp(-A t) grows large on this horizon with rho = 0; "
                              "consider rho > -min Re(lambda)", RuntimeWarning, stacklevel=3)

    # -- public -------------------------------------------------------------
    def T(self, x, t):
        return self._cached(x, t, False)[0].copy()

    def phi(self, x, t):
        self._check_growth(t)
        T, _ = self._cached(x, t, False)
        return T @ expm(-self.design.A * t).T

    def jacobian(self, x, t):
        _, dT = self._cached(x, t, True)
        return expm(-self.design.A * t) @ dT

    def phi_and_jacobian(self, x, t):
        T, dT = self._cached(x, t, True)
        E = expm(-self.design.A * t)
        return T @ E.T, E @ dT


# module-level operations --------------------------------------------------

def eval_T(model, design, x, t, cfg=IntegratorConfig()):
    """``T(x, t) = int_0^t exp(A (t - s)) B H(h(X(x, t; s)), s) ds``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return QuadratureTransform(model, design, cfg).T(x, t)


def eval_phi(model, design, x, t, cfg=IntegratorConfig()):
    """``phi(x, t) = exp(-A t) T(x, t)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return QuadratureTransform(model, design, cfg).phi(x, t)


def eval_phi_jacobian(model, design, x, t, cfg=IntegratorConfig()):
    """``psi(x, t) = int_0^t exp(-A s) B dH/dy dh/dx(X) dX/dx(x, t; s) ds``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return QuadratureTransform(model, design, cfg).jacobian(x, t)


def pde_residual(model, design, x, t, cfg=IntegratorConfig(), evaluator=None, beta=None, dt=None):
    """``d phi/dt + (d phi/dx) f(x, t) - beta(h(x), t)`` at ``(x, t)``.

    The time derivative is a central difference with step ``dt`` (by
    default the evaluator's preference: the integrator step for the
    quadrature transform, 1e-5 for closed forms).  ``beta`` overrides the
    design's canonical right-hand side, e.g. to force a failure.
    """
    if evaluator is None:
        evaluator = QuadratureTransform(model, design, cfg)
    if dt is None:
        dt = evaluator.pde_dt
    if t - dt < 0:
        raise ValueError("t must lie in the interior of the horizon")
    x = np.asarray(x, dtype=float)
    phi_p = evaluator.phi(x, t + dt)
    phi_m = evaluator.phi(x, t - dt)
    J = evaluator.jacobian(x, t)
    fx = model.rhs(x, t)
    y = model.output(x)
    b = evaluator.beta(y, t) if beta is None else np.asarray(beta(y, t), dtype=float)
    return (phi_p - phi_m) / (2.0 * dt) + np.einsum("...ij,...j->...i", J, fx) - b


# --------------------------------------------------------------------------
# left inverse
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LeftInverseConfig:
    """Settings of the numerical left inverse.

    :param starts: number of multi-start seeds (rounded up to a full
        tensor grid over the box)
    :param tol_cost: relative acceptance floor; a minimizer is exact when
        ``|z - phi(x, t)|^2 <= tol_cost * (1 + |z|^2)``
    :param cluster_radius: minimizers closer than this are the same one
    :param method: ``"auto"`` uses an evaluator's structured solver when it
        has one, ``"multistart"`` always runs the simplex search
    :param restarts: extra simplex runs from each local result with a
        fresh, smaller simplex (cures premature collapse in narrow valleys)
    """

    starts: int = 16
    restarts: int = 2
    tol_cost: float = 1e-12
    cluster_radius: float = 1e-4
    method: str = "auto"
    simplex: SimplexConfig = SimplexConfig()

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if self.method not in ("auto", "multistart"):
            raise ValueError("method must be 'auto' or 'multistart'")


def seed_grid(box, starts):
    """Cell-centred tensor grid with at least ``starts`` points."""
    k = int(np.ceil(starts ** (1.0 / box.dim) - 1e-9))
    return box.grid(max(k, 1), interior=True), box.width / max(k, 1)


def cluster(points, radius):
    """Single-linkage clusters; returns a label per point (labels 0..K-1)."""
    m = len(points)
    labels = -np.ones(m, dtype=int)
    current = 0
    for i in range(m):
        if labels[i] >= 0:
            continue
        labels[i] = current
        stack = [i]
        while stack:
            j = stack.pop()
            near = np.flatnonzero((labels < 0) &
                                  (np.max(np.abs(points - points[j]), axis=-1) <= radius))
            labels[near] = current
            stack.extend(near.tolist())
        current += 1
    return labels


def _multistart_candidates(evaluator, Z, t, box, cfg):
    """Lockstep simplex searches for every ``z`` row in ``Z`` and every seed."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    nz = Z.shape[0]
    seeds, cell = seed_grid(box, cfg.starts)
    ns = seeds.shape[0]
    n = box.dim
    simplices = np.repeat(seeds[:, None, :], n + 1, axis=1)
    simplices[:, 1:, :] += np.diag(0.5 * cell)
    simplices = np.tile(simplices, (nz, 1, 1))
    owner = np.repeat(np.arange(nz), ns)
    zscale = 1.0 + np.sum(Z**2, axis=-1)

    def cost(points, which):
        inside = box.clip(points)
        rows = owner[which]
        r = Z[rows] - evaluator.phi(inside, t)
        return np.sum(r**2, axis=-1) + zscale[rows] * np.sum((points - inside)**2, axis=-1)

    # local searches stop on simplex diameter alone
    sc = replace(cfg.simplex, ftol=np.inf,
                 max_evals=cfg.simplex.max_evals if cfg.simplex.max_evals is not None else 200 * n)
    res = minimize_batch(cost, simplices, sc)
    step = 0.5 * cell
    for _ in range(cfg.restarts):
        step = 0.1 * step
        simplices = np.repeat(res.x[:, None, :], n + 1, axis=1)
        simplices[:, 1:, :] += np.diag(step)
        res = minimize_batch(cost, simplices, sc)
    pts = box.clip(res.x).reshape(nz, ns, n)
    costs = np.sum((Z[:, None, :] - evaluator.phi(pts.reshape(-1, n), t).reshape(nz, ns, -1))**2,
                   axis=-1)
    return pts, costs


def _select(points, costs, z, t, cfg, strict, prefer=None):
    scale = 1.0 + float(np.sum(np.asarray(z)**2))
    floor = cfg.tol_cost * scale
    best = int(np.argmin(costs))
    cbest = float(costs[best])
    if strict and not cbest <= floor:
        raise NoSolution(f"no minimizer reached the cost floor at t={t:g} "
                         f"(best {cbest:.3e} > {floor:.3e})", best=points[best], cost=cbest)
    level = floor if strict else cbest + floor
    at_floor = np.flatnonzero(costs <= level)
    pts = points[at_floor]
    labels = cluster(pts, cfg.cluster_radius)
    if labels.max() > 0:
        if prefer is None:
            reps = np.array([pts[labels == k][0] for k in range(labels.max() + 1)])
            raise NonInjective(f"{labels.max() + 1} distinct minimizers at the cost floor "
                               f"(t={t:g})", minimizers=reps)
        d = np.max(np.abs(pts - prefer), axis=-1)
        keep = labels == labels[int(np.argmin(d))]
    else:
        keep = labels == 0
    sel = at_floor[keep]
    return points[sel[int(np.argmin(costs[sel]))]], float(costs[sel].min())


def left_inverse(evaluator, z, t, box, cfg=LeftInverseConfig(), strict=True, prefer=None,
                 return_cost=False):
    """``argmin_{x in box} |z - phi(x, t)|^2`` when the minimizer is unique.

    :param strict: require the minimum to reach the exactness floor
        (``NoSolution`` otherwise); with ``strict=False`` the best
        approximant is returned, i.e. ``z`` is projected onto the image
    :param prefer: when several minimizers tie, return the one nearest
        this state instead of raising ``NonInjective``
    :raises NonInjective: two or more minimizer clusters at the floor
    :raises NoSolution: ``strict`` and no minimizer reaches the floor
    """
    z = np.asarray(z, dtype=float)
    found = evaluator.candidates(z, t, box) if cfg.method == "auto" else None
    if found is None:
        pts, costs = _multistart_candidates(evaluator, z[None], t, box, cfg)
        pts, costs = pts[0], costs[0]
    else:
        pts, costs = found
    x, c = _select(pts, costs, z, t, cfg, strict, prefer)
    return (x, c) if return_cost else x


def left_inverse_many(evaluator, Z, t, box, cfg=LeftInverseConfig(), strict=True):
    """Left inverse for many targets at one time, sharing the batched search.

    Returns ``(X, status)`` where ``status[i]`` is ``"ok"``, ``"noninjective"``
    or ``"nosolution"``; failed rows of ``X`` are NaN.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = box.dim
    X = np.full((Z.shape[0], n), np.nan)
    status = []
    if cfg.method == "auto" and evaluator.candidates(Z[0], t, box) is not None:
        found = [evaluator.candidates(z, t, box) for z in Z]
    else:
        pts, costs = _multistart_candidates(evaluator, Z, t, box, cfg)
        found = list(zip(pts, costs))
    for i, (p, c) in enumerate(found):
        try:
            X[i] = _select(p, c, Z[i], t, cfg, strict)[0]
            status.append("ok")
        except NonInjective:
            status.append("noninjective")
        except NoSolution:
            status.append("nosolution")
    return X, status


def _local_candidates(evaluator, z, t, box, x_start, cfg):
    """Simplex search started at ``x_start`` only (warm start)."""
    n = box.dim
    z = np.asarray(z, dtype=float)
    zscale = 1.0 + float(np.sum(z**2))

    def cost(points, which):
        inside = box.clip(points)
        r = z - evaluator.phi(inside, t)
        return np.sum(r**2, axis=-1) + zscale * np.sum((points - inside)**2, axis=-1)

    sc = replace(cfg.simplex, ftol=np.inf,
                 max_evals=cfg.simplex.max_evals if cfg.simplex.max_evals is not None else 200 * n)
    step = 1e-2 * box.width
    x = np.asarray(x_start, dtype=float)
    for _ in range(cfg.restarts + 1):
        S = np.repeat(x[None, None, :], n + 1, axis=1)
        S[0, 1:, :] += np.diag(step)
        x = minimize_batch(cost, S, sc).x[0]
        step = 0.1 * step
    x = box.clip(x)
    r = z - evaluator.phi(x, t)
    return x[None], np.array([float(np.sum(r**2))])


def left_inverse_path(evaluator, Z, times, box, cfg=LeftInverseConfig(), strict=True,
                      x_start=None):
    """Left inverse along a time-ordered sequence of targets.

    Each node prefers the minimizer nearest the previous node's solution,
    which resolves ties by state continuity instead of raising.  Without a
    structured solver, nodes after the first run a warm-started local
    search and fall back to the full multi-start only when that search
    misses the floor.

    :returns: ``(X, costs, status)`` with ``status[k]`` one of ``"ok"``,
        ``"nosolution"`` (``strict`` only; the row holds the best point)
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    times = np.broadcast_to(np.asarray(times, dtype=float), (Z.shape[0],))
    M, n = Z.shape[0], box.dim
    X = np.empty((M, n))
    C = np.empty(M)
    status = []
    found = evaluator.candidates_many(Z, times, box) if cfg.method == "auto" else None
    prev = None if x_start is None else np.asarray(x_start, dtype=float)
    for k in range(M):
        z, t = Z[k], float(times[k])
        if found is not None:
            pts, costs = found[0][k], found[1][k]
        elif prev is not None:
            pts, costs = _local_candidates(evaluator, z, t, box, prev, cfg)
            if strict and not costs[0] <= cfg.tol_cost * (1.0 + z @ z):
                pts, costs = _multistart_candidates(evaluator, z[None], t, box, cfg)
                pts, costs = pts[0], costs[0]
        else:
            pts, costs = _multistart_candidates(evaluator, z[None], t, box, cfg)
            pts, costs = pts[0], costs[0]
        pref = prev if prev is not None else pts[int(np.argmin(costs))]
        try:
            X[k], C[k] = _select(pts, costs, z, t, cfg, strict, pref)
            status.append("ok")
        except NoSolution as exc:
            X[k], C[k] = exc.best, exc.cost
            status.append("nosolution")
        prev = X[k]
    return X, C, status


def project_many(evaluator, Z, times, box, cfg=LeftInverseConfig()):
    """Best approximant ``argmin_x |z - phi(x, t)|^2`` per row, no uniqueness test.

    Exact ties go to the first candidate found.  Used where a value is
    needed for every target (cost landscapes).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    times = np.broadcast_to(np.asarray(times, dtype=float), (Z.shape[0],))
    found = evaluator.candidates_many(Z, times, box) if cfg.method == "auto" else None
    if found is not None:
        pts, costs = found
        k = np.argmin(costs, axis=1)
        rows = np.arange(Z.shape[0])
        return pts[rows, k], costs[rows, k]
    X = np.empty((Z.shape[0], box.dim))
    C = np.empty(Z.shape[0])
    for t in np.unique(times):
        sel = np.flatnonzero(times == t)
        pts, costs = _multistart_candidates(evaluator, Z[sel], float(t), box, cfg)
        k = np.argmin(costs, axis=1)
        X[sel] = pts[np.arange(sel.size), k]
        C[sel] = costs[np.arange(sel.size), k]
    return X, C
