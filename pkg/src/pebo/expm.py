"""Matrix exponential: exact diagonal path, scaling-and-squaring otherwise."""
from __future__ import annotations

import numpy as np

# Pade(6,6) coefficients b_k = (12-k)! 6! / (12! k! (6-k)!)
_PADE6 = (1.0, 1.0 / 2, 5.0 / 44, 1.0 / 66, 1.0 / 792, 1.0 / 15840, 1.0 / 665280)


def is_diagonal(M):
    M = np.asarray(M)
    return np.count_nonzero(M - np.diag(np.diagonal(M))) == 0


def expm(M):
    """``exp(M)`` for a square matrix.

    Diagonal inputs are exponentiated entrywise.  General matrices use a
    (6,6) Pade approximant after scaling ``M`` by ``2**-s`` so that its
    infinity norm is at most 1/2, followed by ``s`` squarings.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expm needs a square matrix")
    if is_diagonal(M):
        return np.diag(np.exp(np.diagonal(M)))
    norm = np.linalg.norm(M, np.inf)
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / 2.0**s
    n = M.shape[0]
    I = np.eye(n)
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    c = _PADE6
    U = X @ (c[1] * I + c[3] * X2 + c[5] * X4)
    V = c[0] * I + c[2] * X2 + c[4] * X4 + c[6] * X6
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def expm_series(A, times):
    """``exp(A * t)`` for every ``t`` in ``times``, shape ``(len(times), n, n)``.

    For uniform grids only one exponential is formed and then propagated
    by repeated multiplication.
    """
    A = np.asarray(A, dtype=float)
    times = np.asarray(times, dtype=float)
    n = A.shape[0]
    if is_diagonal(A):
        d = np.diagonal(A)
        out = np.zeros((times.size, n, n))
        idx = np.arange(n)
        out[:, idx, idx] = np.exp(np.outer(times, d))
        return out
    out = np.empty((times.size, n, n))
    if times.size == 0:
        return out
    steps = np.diff(times)
    if steps.size and np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
        E0 = expm(A * times[0])
        Eh = expm(A * steps[0])
        out[0] = E0
        for k in range(1, times.size):
            out[k] = out[k - 1] @ Eh
        return out
    for k, t in enumerate(times):
        out[k] = expm(A * t)
    return out
