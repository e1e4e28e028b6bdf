"""Full-batch gradient descent on the inner weights, the baseline for comparison."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..model import RidgeNetwork, haar_orthogonal

__all__ = ["GDResult", "gradient_descent", "network_mse", "haar_init", "match_directions", "replace_weights"]


@dataclass
class GDResult:
    weights: np.ndarray
    loss_history: np.ndarray


def _forward(A, b, theta, X):
    z = X @ A + theta
    return np.tanh(z), np.tanh(z) @ b - b @ np.tanh(theta)


def network_mse(A, b, theta, X, y) -> float:
    return float(np.mean((_forward(A, b, theta, X)[1] - y) ** 2))


def gradient_descent(
    X, y, scales, offsets, init, steps: int = 1000, stepsize: float = 0.1
) -> GDResult:
    """Minimize ``mean (f_A(x_n) - y_n)^2`` over ``A`` with ``b`` and ``theta`` fixed.

    ``loss_history[k]`` is the loss of the k-th iterate, so it has ``steps + 1`` entries.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    b = np.asarray(scales, dtype=float)
    theta = np.asarray(offsets, dtype=float)
    A = np.array(init, dtype=float, copy=True)
    n = X.shape[0]
    shift = b @ np.tanh(theta)
    hist = np.empty(steps + 1)
    for k in range(steps + 1):
        t = np.tanh(X @ A + theta)
        r = t @ b - shift - y
        hist[k] = r @ r / n
        if k == steps:
            break
        # d/dA mean r^2 = (2/n) X^T (r * b * tanh'(z))
        A -= stepsize * (2.0 / n) * (X.T @ (r[:, None] * (1.0 - t * t) * b))
    return GDResult(A, hist)


def haar_init(rng: np.random.Generator, d: int, m: int) -> np.ndarray:
    return haar_orthogonal(rng, d, m)


def match_directions(estimates, truth) -> tuple[np.ndarray, np.ndarray, float]:
    """Optimal sign-aware assignment of estimate columns to truth columns.

    Minimizes ``sum_i min(||v - a_i||, ||v + a_i||)^2``.  Returns the matched,
    sign-aligned estimates (one column per truth column, NaN where unmatched),
    the per-column errors and the total cost.
    """
    V = np.asarray(estimates, dtype=float)
    A = np.asarray(truth, dtype=float)
    plus = np.linalg.norm(V[:, :, None] - A[:, None, :], axis=0)
    minus = np.linalg.norm(V[:, :, None] + A[:, None, :], axis=0)
    cost = np.minimum(plus, minus) ** 2
    rows, cols = linear_sum_assignment(cost)
    out = np.full(A.shape, np.nan)
    errs = np.full(A.shape[1], np.nan)
    for r, c in zip(rows, cols):
        s = 1.0 if plus[r, c] <= minus[r, c] else -1.0
        out[:, c] = s * V[:, r]
        errs[c] = min(plus[r, c], minus[r, c])
    return out, errs, float(cost[rows, cols].sum())


def replace_weights(net: RidgeNetwork, A) -> RidgeNetwork:
    A = np.asarray(A, dtype=float)
    return net.with_weights(A / np.linalg.norm(A, axis=0))
