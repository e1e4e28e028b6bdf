"""Pure numpy reference for the iteration kernels.

Both kernels work on coefficient vectors in an orthonormal basis ``Q``
(rows, shape ``(k, m*m)``) of a space of symmetric matrices, so the
Frobenius norm of a member equals the Euclidean norm of its coefficients.
"""
from __future__ import annotations

import numpy as np


def _members(Q: np.ndarray, c: np.ndarray, m: int) -> np.ndarray:
    return (c @ Q).reshape(m, m)


def rank1_iterate(Q, c0, gamma: float, steps: int, tol: float):
    """Run ``X <- P(Pi_gamma(X))`` from coefficients ``c0``.

    Returns ``(c, history, steps_taken)`` where ``history[l]`` is the spectral
    norm of the l-th iterate.  Stops early once ``|1 - ||X||| < tol`` (``tol > 0``).
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    c = np.array(c0, dtype=float, copy=True)
    m = int(round(np.sqrt(Q.shape[1])))
    history = np.empty(steps + 1)
    g2 = gamma * gamma - 1.0
    taken = steps
    for ell in range(steps + 1):
        lam, V = np.linalg.eigh(_members(Q, c, m))
        j = int(np.argmax(np.abs(lam)))
        history[ell] = abs(lam[j])
        if ell == steps:
            break
        if tol > 0 and abs(1.0 - history[ell]) < tol:
            taken = ell
            break
        u = V[:, j]
        w = Q @ np.outer(u, u).reshape(-1)
        lstar = lam[j]
        c = (c + (gamma - 1.0) * lstar * w) / np.sqrt(c @ c + g2 * lstar * lstar)
    return c, history[: taken + 1].copy(), taken


def pd_ascent(Q, c0, iters: int):
    """Supergradient ascent of the smallest eigenvalue on the unit sphere of the space.

    Returns ``(best_c, best_value)``, the best iterate seen.
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    c = np.array(c0, dtype=float, copy=True)
    c /= np.linalg.norm(c)
    m = int(round(np.sqrt(Q.shape[1])))
    best_c, best = c.copy(), -np.inf
    for it in range(iters + 1):
        lam, V = np.linalg.eigh(_members(Q, c, m))
        if lam[0] > best:
            best, best_c = lam[0], c.copy()
        if it == iters:
            break
        v = V[:, 0]
        c = c + (Q @ np.outer(v, v).reshape(-1)) / np.sqrt(it + 1.0)
        c /= np.linalg.norm(c)
    return best_c, float(best)
