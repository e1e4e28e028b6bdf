"""Positive definite members of a matrix space and the whitening transform they induce."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import near_orthonormality
from .oracle import PullbackOracle, QueryOracle, hessians_fd, sample_sphere
from .subspace import (
    MatrixSubspace,
    matrix_space_from_vectors,
    perturb_subspace,
    recover_matrix_space,
    sign_fix,
)

__all__ = [
    "InfeasibleError",
    "NotPositiveDefiniteError",
    "WhiteningResult",
    "find_pd_matrix",
    "whiten",
    "whitening_step",
    "whitening_bound",
    "BootstrapResult",
    "bootstrap_whitening",
    "synthetic_bootstrap",
]


class InfeasibleError(RuntimeError):
    """The matrix space contains no (numerically) positive definite member."""


class NotPositiveDefiniteError(ValueError):
    pass


@dataclass
class WhiteningResult:
    G_tilde: np.ndarray
    W_tilde: np.ndarray
    min_eig: float
    s_before: float | None = None
    s_after: float | None = None

    @property
    def condition(self) -> float:
        ev = np.linalg.eigvalsh(self.G_tilde)
        return float(ev[-1] / ev[0])


def find_pd_matrix(
    space: MatrixSubspace, max_iters: int = 500, tol: float = 1e-8, backend: str | None = None
) -> tuple[np.ndarray, float]:
    """Unit-Frobenius member of ``space`` with (approximately) the largest smallest eigenvalue.

    Projected supergradient ascent started from the normalized projection of
    the identity; the best iterate is returned.
    """
    if space.rank < 1:
        raise ValueError("space must have rank >= 1")
    Q = space.vec_basis()
    c0 = space.coefficients(np.eye(space.side))
    if np.linalg.norm(c0) < 1e-14:
        # identity orthogonal to the space: start from the first basis element
        c0 = np.zeros(space.rank)
        c0[0] = 1.0
    c, best = kernels.pd_ascent(Q, c0, int(max_iters), backend)
    if best <= tol:
        raise InfeasibleError(f"no positive definite member found (best min eigenvalue {best:.3g})")
    G = space.from_coefficients(c)
    G = 0.5 * (G + G.T)
    return G / np.linalg.norm(G), float(np.linalg.eigvalsh(G)[0] / np.linalg.norm(G))


def whiten(G) -> np.ndarray:
    """``D^{-1/2} U^T`` from ``G = U D U^T``, eigenvalues descending, eigenvectors sign-fixed."""
    G = np.asarray(G, dtype=float)
    lam, U = np.linalg.eigh(0.5 * (G + G.T))
    if lam[0] <= 1e-12:
        raise NotPositiveDefiniteError(f"matrix is not positive definite (min eigenvalue {lam[0]:.3g})")
    # stable descending order keeps ties in eigh order, so whiten(I) = I
    order = np.argsort(-lam, kind="stable")
    lam, U = lam[order], sign_fix(U[:, order])
    return U.T / np.sqrt(lam)[:, None]


def whitening_step(space: MatrixSubspace, truth=None, **kw) -> WhiteningResult:
    """Find a PD member of ``space`` and its whitening matrix; report 𝒮 if ``truth`` (columns) is given."""
    G, min_eig = find_pd_matrix(space, **kw)
    W = whiten(G)
    s_before = s_after = None
    if truth is not None:
        A = np.asarray(truth, dtype=float)
        s_before = near_orthonormality(A).s_value
        WA = W @ A
        s_after = near_orthonormality(WA / np.linalg.norm(WA, axis=0)).s_value
    return WhiteningResult(G, W, min_eig, s_before, s_after)


def whitening_bound(eta: float, G_tilde, gamma: float) -> float:
    """Guaranteed 𝒮 of the normalized whitened directions: ``sqrt(2) eta ||G||_F / gamma``."""
    return float(np.sqrt(2.0) * eta * np.linalg.norm(G_tilde) / gamma)


@dataclass
class BootstrapResult:
    transform: np.ndarray
    """Accumulated map ``L``; effective directions are proportional to ``L a_i``."""
    oracle: QueryOracle
    """Oracle for ``x -> f(M x)`` with ``M = L^T / ||L||``."""
    space: MatrixSubspace
    """Matrix space recovered from the final transformed oracle."""
    history: list = field(default_factory=list)

    def pull_back(self, directions) -> np.ndarray:
        """Map unit directions of the transformed problem to unit directions of the original one."""
        V = np.atleast_2d(np.asarray(directions, dtype=float))
        A = np.linalg.solve(self.transform, V.T)
        A = A / np.linalg.norm(A, axis=0)
        return A.T


def _transformed_oracle(oracle: QueryOracle, L: np.ndarray) -> PullbackOracle:
    # f(L^T x) may leave the unit ball; scaling by 1/||L|| keeps queries inside.
    return PullbackOracle(oracle, L.T / np.linalg.norm(L, 2))


def bootstrap_whitening(
    oracle: QueryOracle,
    m: int,
    k_max: int = 6,
    m_X: int | None = None,
    h: float = 1e-3,
    seed=0,
    truth=None,
    rel_change: float = 0.01,
    max_iters: int = 500,
    hessians=None,
) -> BootstrapResult:
    """Repeatedly recover the Hessian space of the transformed oracle and whiten it.

    Stops after ``k_max`` whitenings, once the condition number of the positive
    definite member reaches one, or when it changes by less than ``rel_change``
    relative to the previous iteration.  With ``truth`` (columns ``a_i``) the
    history also records 𝒮 of the effective directions.  ``hessians(oracle, X)``
    replaces the default second-difference sampler.
    """
    if oracle.dim != m:
        raise ValueError("bootstrap whitening expects an oracle on R^m")
    m_X = 2 * m if m_X is None else m_X
    if hessians is None:
        hessians = lambda o, X: hessians_fd(o, X, h)  # noqa: E731
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    L = np.eye(m)
    cur = _transformed_oracle(oracle, L)
    prev_cond = None
    history = []

    def s_now():
        if truth is None:
            return None
        LA = L @ np.asarray(truth, dtype=float)
        return near_orthonormality(LA / np.linalg.norm(LA, axis=0)).s_value

    for k in range(k_max + 1):
        rng = np.random.default_rng(ss.spawn(1)[0])
        X = sample_sphere(rng, m_X, m)
        space = recover_matrix_space(hessians(cur, X), m)
        if k == k_max:
            history.append({"k": k, "min_eig": None, "condition": None, "s_value": s_now()})
            break
        G, min_eig = find_pd_matrix(space, max_iters=max_iters)
        ev = np.linalg.eigvalsh(G)
        cond = float(ev[-1] / ev[0])
        history.append({"k": k, "min_eig": min_eig, "condition": cond, "s_value": s_now()})
        if cond <= 1.0 + 1e-6 or (prev_cond is not None and abs(prev_cond - cond) < rel_change * prev_cond):
            break
        prev_cond = cond
        # Hessians of f(M x) live in span{(M^T a)(M^T a)^T} with M^T proportional to L
        L = whiten(G) @ L
        L = L / np.linalg.norm(L, 2)
        cur = _transformed_oracle(oracle, L)
    return BootstrapResult(L, cur, space, history)


def synthetic_bootstrap(
    A, eta: float, k_max: int = 6, seed=0, max_iters: int = 500, stop_if_infeasible: bool = False
) -> list[dict]:
    """Bootstrap whitening where each recovered space is the exact space perturbed by ``eta``.

    Returns per-iteration diagnostics including 𝒮 of the current directions.
    With ``stop_if_infeasible`` a perturbed space without a positive definite
    member ends the run (the last entry is flagged) instead of raising.
    """
    A = np.asarray(A, dtype=float)
    A = A / np.linalg.norm(A, axis=0)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    history = []
    for k in range(k_max + 1):
        entry = {"k": k, "s_value": near_orthonormality(A).s_value, "min_eig": None, "condition": None}
        history.append(entry)
        if k == k_max:
            break
        rng = np.random.default_rng(ss.spawn(1)[0])
        space = perturb_subspace(matrix_space_from_vectors(A), eta, rng)
        try:
            G, min_eig = find_pd_matrix(space, max_iters=max_iters)
        except InfeasibleError:
            if not stop_if_infeasible:
                raise
            entry["infeasible"] = True
            break
        ev = np.linalg.eigvalsh(G)
        entry["min_eig"], entry["condition"] = min_eig, float(ev[-1] / ev[0])
        WA = whiten(G) @ A
        A = WA / np.linalg.norm(WA, axis=0)
    return history
