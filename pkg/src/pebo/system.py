"""Plant abstraction, state domains and sampled-signal containers.

All evaluators follow the batched convention: a state argument may be a
single vector of shape ``(n,)`` or a stack of shape ``(..., n)``.  Models
built from plain per-point callables are wrapped so that the rest of the
toolkit can always pass stacks.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

FD_REL_STEP = 1e-6


@dataclass(frozen=True)
class DomainBox:
    """Componentwise bounds describing the closed state domain."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("DomainBox requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, atol=0.0):
        """Inclusive membership test; works on stacks of states."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower - atol) & (x <= self.upper + atol), axis=-1)

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    def grid(self, num, interior=False):
        """Tensor grid with ``num`` points per axis, shape ``(num**n, n)``.

        With ``interior=True`` the grid is cell-centred and never touches the
        boundary.
        """
        axes = []
        for lo, hi in zip(self.lower, self.upper):
            if interior:
                edges = np.linspace(lo, hi, num + 1)
                axes.append(0.5 * (edges[:-1] + edges[1:]))
            else:
                axes.append(np.linspace(lo, hi, num))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))


def _batched(fun, out_ndim):
    """Lift a per-point callable ``fun(x, *args)`` to stacks of points."""

    def wrapped(x, *args):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(fun(x, *args), dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.stack([np.asarray(fun(xi, *args), dtype=float) for xi in flat])
        return out.reshape(x.shape[:-1] + out.shape[1:])

    wrapped.__wrapped__ = fun
    return wrapped


def fd_jacobian(fun, x, *args, rel_step=FD_REL_STEP):
    """Central-difference Jacobian of ``fun`` at a stack of points.

    The step for component ``i`` is ``rel_step * (1 + |x_i|)``.  Returns an
    array of shape ``x.shape[:-1] + (m, n)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for i in range(n):
        hstep = rel_step * (1.0 + np.abs(x[..., i]))
        dx = np.zeros_like(x)
        dx[..., i] = hstep
        fp = np.asarray(fun(x + dx, *args), dtype=float)
        fm = np.asarray(fun(x - dx, *args), dtype=float)
        cols.append((fp - fm) / (2.0 * hstep[..., None]))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class SystemModel:
    """A nonlinear time-varying plant ``x' = f(x, t)``, ``y = h(x)``.

    :param n: state dimension
    :param p: output dimension
    :param f: vector field ``f(x, t)``; if ``u`` is given it is called as
        ``f(x, t, u(t))``
    :param h: output map ``h(x)``
    :param df_dx: optional analytic state Jacobian of ``f``
    :param dh_dx: optional analytic Jacobian of ``h``
    :param u: optional exogenous input signal, ``u(t) -> R^m``
    :param vectorized: set when ``f``/``h`` (and the Jacobians) already
        accept stacks of states of shape ``(..., n)``
    """

    n: int
    p: int
    f: Callable
    h: Callable
    df_dx: Optional[Callable] = None
    dh_dx: Optional[Callable] = None
    u: Optional[Callable] = None
    vectorized: bool = False
    name: str = "model"
    _f: Callable = field(init=False, repr=False, compare=False)
    _h: Callable = field(init=False, repr=False, compare=False)
    _df: Optional[Callable] = field(init=False, repr=False, compare=False)
    _dh: Optional[Callable] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("state and output dimensions must be positive")
        if self.u is None:
            f_raw = self.f
        else:
            f_user, u_sig = self.f, self.u

            def f_raw(x, t):
                return f_user(x, t, u_sig(t))

        lift = (lambda g, k: g) if self.vectorized else _batched
        object.__setattr__(self, "_f", lift(f_raw, 1))
        object.__setattr__(self, "_h", lift(self.h, 1))
        df = None
        if self.df_dx is not None:
            if self.u is None:
                df = self.df_dx
            else:
                df_user, u_sig = self.df_dx, self.u

                def df(x, t):
                    return df_user(x, t, u_sig(t))

            df = lift(df, 2)
        object.__setattr__(self, "_df", df)
        object.__setattr__(self, "_dh", None if self.dh_dx is None else lift(self.dh_dx, 2))

    def rhs(self, x, t):
        return self._f(x, t)

    def output(self, x):
        return np.asarray(self._h(x), dtype=float).reshape(np.shape(x)[:-1] + (self.p,))

    def jac_f(self, x, t):
        if self._df is not None:
            return np.asarray(self._df(x, t), dtype=float)
        return fd_jacobian(self._f, x, t)

    def jac_h(self, x):
        if self._dh is not None:
            out = np.asarray(self._dh(x), dtype=float)
            return out.reshape(np.shape(x)[:-1] + (self.p, self.n))
        return fd_jacobian(self.output, x)


@dataclass(frozen=True)
class SampledSignal:
    """Time-stamped samples, one row of ``values`` per time stamp.

    Times must be strictly monotone; backward trajectories are stored in
    the order they were integrated (decreasing time).
    """

    times: np.ndarray
    values: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if values.shape[0] != times.size:
            raise ValueError("row count of values must equal the number of time stamps")
        if times.size > 1:
            d = np.diff(times)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("times must be strictly monotone")
            if self.uniform and not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
                raise ValueError("signal flagged uniform but the time step varies")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def window(self, t_start, t_end):
        """Sub-signal restricted to ``t_start <= t <= t_end`` (with a 1e-9 slack)."""
        mask = (self.times >= t_start - 1e-9) & (self.times <= t_end + 1e-9)
        return SampledSignal(self.times[mask], self.values[mask], self.uniform)


@dataclass(frozen=True)
class Trajectory:
    signal: SampledSignal
    t0: float
    x0: np.ndarray

    @property
    def times(self):
        return self.signal.times

    @property
    def states(self):
        return self.signal.values

    @property
    def end(self):
        return self.signal.values[-1]


@dataclass
class ModelReport:
    """Outcome of :func:`validate_model`; ``ok`` is true when nothing was flagged."""

    points_checked: int = 0
    eval_failures: list = field(default_factory=list)
    nonfinite: list = field(default_factory=list)
    jacobian_mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.eval_failures or self.nonfinite or self.jacobian_mismatches)


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def validate_model(model, box, horizon, grid=(20, 10), rtol=1e-4, jac_samples=50, seed=0):
    """Evaluate ``f`` and ``h`` over a state x time grid and audit Jacobians.

    ``grid=(k, m)`` means ``k`` points per state axis and ``m`` time points.
    Supplied Jacobians are compared with central differences at
    ``jac_samples`` random domain points.
    """
    report = ModelReport()
    k, m = grid
    states = box.grid(k)
    times = np.linspace(horizon[0], horizon[1], m)
    for t in times:
        for x in states:
            report.points_checked += 1
            try:
                fx = np.asarray(model.rhs(x, t), dtype=float)
                hx = model.output(x)
            except Exception as exc:  # noqa: BLE001 - report-only
                report.eval_failures.append((x.copy(), float(t), repr(exc)))
                continue
            if fx.shape != (model.n,) or hx.shape != (model.p,):
                report.eval_failures.append((x.copy(), float(t), "wrong output shape"))
            elif not (np.all(np.isfinite(fx)) and np.all(np.isfinite(hx))):
                report.nonfinite.append((x.copy(), float(t)))

    rng = np.random.default_rng(seed)
    pts = box.sample(rng, jac_samples)
    ts = rng.uniform(horizon[0], horizon[1], jac_samples)
    for x, t in zip(pts, ts):
        if model._df is not None:
            fd = fd_jacobian(model.rhs, x, t)
            err = _rel_err(model.jac_f(x, t), fd)
            if not err < rtol:
                report.jacobian_mismatches.append(("df_dx", x.copy(), float(t), float(err)))
        if model._dh is not None:
            fd = fd_jacobian(model.output, x)
            err = _rel_err(model.jac_h(x), fd)
            if not err < rtol:
                report.jacobian_mismatches.append(("dh_dx", x.copy(), float(t), float(err)))
    return report


def warn_if_outside(box, states, context="simulation"):
    """Warn (never raise) when states leave the declared domain box."""
    if box is None:
        return
    inside = box.contains(states)
    if not np.all(inside):
        warnings.warn(f"{context}: {np.size(inside) - np.count_nonzero(inside)} "
                      "samples left the domain box", RuntimeWarning, stacklevel=3)


class Polynomial:
    """Vector of polynomials; component ``i`` is ``sum_k c_ik prod_j x_j^e_ikj``.

    :param terms: per component, a list of ``(coef, exponents)`` pairs
    :param n: number of variables
    """

    def __init__(self, terms, n):
        self.n = n
        self.terms = []
        for comp in terms:
            coefs = np.array([float(c) for c, _ in comp]) if comp else np.zeros(0)
            exps = (np.array([list(e) for _, e in comp], dtype=int) if comp
                    else np.zeros((0, n), dtype=int))
            if exps.shape[1:] != (n,) or np.any(exps < 0):
                raise ValueError(f"exponent lists must have {n} nonnegative entries")
            self.terms.append((coefs, exps))

    def __len__(self):
        return len(self.terms)

    def _monos(self, x, exps):
        x = np.asarray(x, dtype=float)
        return np.prod(x[..., None, :] ** exps, axis=-1)          # (..., K)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = [self._monos(x, e) @ c for c, e in self.terms]
        return np.stack(out, axis=-1)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        rows = []
        for c, e in self.terms:
            cols = []
            for j in range(self.n):
                ej = e.copy()
                fac = ej[:, j].astype(float)
                ej[:, j] = np.maximum(ej[:, j] - 1, 0)
                cols.append(self._monos(x, ej) @ (c * fac))
            rows.append(np.stack(cols, axis=-1))
        return np.stack(rows, axis=-2)


def polynomial_model(n, p, f_terms, h_terms, name="polynomial"):
    """Autonomous plant with polynomial ``f`` and ``h`` and exact Jacobians."""
    f = Polynomial(f_terms, n)
    h = Polynomial(h_terms, n)
    if len(f) != n or len(h) != p:
        raise ValueError(f"need {n} vector-field and {p} output components")
    return SystemModel(n=n, p=p, f=lambda x, t: f(x), h=h,
                       df_dx=lambda x, t: f.jacobian(x), dh_dx=h.jacobian,
                       vectorized=True, name=name)
