"""Recovery of individual weight directions as rank-one members of a matrix space.

A projected power-type iteration drives a random member of the space toward a
local maximizer of the spectral norm on the Frobenius unit sphere.  Near an
orthonormal system those maximizers are ``+- a_i a_i^T``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .subspace import MatrixSubspace, sign_fix

__all__ = [
    "pi_gamma",
    "MaximizerState",
    "find_local_maximizer",
    "contraction_rate",
    "extract_direction",
    "DirectionSet",
    "collect_directions",
    "cluster_directions",
    "coupon_collector_expectation",
]

log = logging.getLogger(__name__)

GAP_WARN = 1e-10


def pi_gamma(X, gamma: float = 2.0) -> np.ndarray:
    """Scale the top singular value of ``X`` by ``gamma`` and renormalize in Frobenius norm."""
    X = np.asarray(X, dtype=float)
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    U, s, Vt = np.linalg.svd(X)
    if s[0] == 0:
        raise ValueError("Pi_gamma is undefined at zero")
    s = s.copy()
    s[0] *= gamma
    return (U * s) @ Vt / np.linalg.norm(s)


@dataclass
class MaximizerState:
    X: np.ndarray
    history: np.ndarray
    converged: bool
    steps_taken: int
    X0: np.ndarray = field(repr=False, default=None)


def _initial_coefficients(space: MatrixSubspace, rng: np.random.Generator) -> np.ndarray:
    m = space.side
    G = rng.standard_normal((m, m))
    c = space.coefficients((G + G.T) / np.sqrt(2.0))
    return c / np.linalg.norm(c)


def find_local_maximizer(
    space: MatrixSubspace,
    gamma: float = 2.0,
    steps: int = 100,
    seed=None,
    tol: float = 0.0,
    backend: str | None = None,
) -> MaximizerState:
    """Iterate ``X <- P(Pi_gamma(X))`` from a normalized projected Gaussian.

    ``history`` holds the spectral norm of every iterate.  The run stops early
    once the spectral norm is within ``tol`` of one; the default ``tol=0`` always
    runs ``steps`` iterations.
    """
    if gamma <= np.sqrt(2.0):
        raise ValueError("gamma must exceed sqrt(2)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Q = space.vec_basis()
    c0 = _initial_coefficients(space, rng)
    c, history, taken = kernels.rank1_iterate(Q, c0, float(gamma), int(steps), float(tol))
    X = space.from_coefficients(c)
    X = 0.5 * (X + X.T)
    converged = bool(
        (tol > 0 and abs(1.0 - history[-1]) < tol)
        or (len(history) > 1 and abs(history[-1] - history[-2]) < 1e-12)
    )
    return MaximizerState(X, history, converged, int(taken), space.from_coefficients(c0))


def contraction_rate(gamma: float, x0_spectral: float) -> float:
    """Guaranteed per-step contraction factor of ``1 - ||X||`` started at spectral norm ``x0_spectral``."""
    return 2.0 / ((gamma * gamma - 1.0) * x0_spectral**2 + 1.0)


def extract_direction(M, return_gap: bool = False):
    """Unit eigenvector for the spectral norm of symmetric ``M``, sign-fixed.

    If the spectral norm is attained at a negative eigenvalue, ``-M`` is used.
    A small gap to the second eigenvalue is logged as low confidence.
    """
    M = np.asarray(M, dtype=float)
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    if abs(lam[0]) > abs(lam[-1]):
        lam, V = -lam[::-1], V[:, ::-1]
    u = sign_fix(V[:, -1:])[:, 0]
    gap = float(lam[-1] - lam[-2]) if lam.size > 1 else float(lam[-1])
    if gap < GAP_WARN:
        log.warning("direction extracted with small eigenvalue gap %.3g", gap)
    return (u, gap) if return_gap else u


@dataclass
class DirectionSet:
    vectors: np.ndarray
    """Cluster representatives as rows, ``(k, m)``, ordered by multiplicity."""
    multiplicities: np.ndarray
    raw: np.ndarray
    """Every extracted direction as rows, ``(n_rep, m)``."""
    spectral_norms: np.ndarray

    @property
    def num_distinct(self) -> int:
        return self.vectors.shape[0]


def _greedy_clusters(raw: np.ndarray, delta: float):
    reps: list[np.ndarray] = []
    sums: list[np.ndarray] = []
    counts: list[int] = []
    for v in raw:
        best, best_d, best_s = -1, np.inf, 1.0
        for j, r in enumerate(reps):
            dp, dm = np.linalg.norm(v - r), np.linalg.norm(v + r)
            dist, s = (dp, 1.0) if dp <= dm else (dm, -1.0)
            if dist < best_d:
                best, best_d, best_s = j, dist, s
        if best >= 0 and best_d <= delta:
            sums[best] += best_s * v
            counts[best] += 1
            reps[best] = sums[best] / np.linalg.norm(sums[best])
        else:
            reps.append(v.copy())
            sums.append(v.copy())
            counts.append(1)
    return np.array(reps), np.array(counts)


def _kmeans_clusters(raw: np.ndarray, k: int, rng: np.random.Generator):
    from scipy.cluster.vq import kmeans2

    n, m = raw.shape
    k = min(k, n)
    feats = np.einsum("ni,nj->nij", raw, raw).reshape(n, m * m)
    _, labels = kmeans2(feats, k, minit="++", seed=rng)
    reps, counts = [], []
    for j in range(k):
        members = raw[labels == j]
        if len(members) == 0:
            continue
        C = members.T @ members
        reps.append(np.linalg.eigh(C)[1][:, -1])
        counts.append(len(members))
    return np.array(reps), np.array(counts)


def cluster_directions(raw, delta: float = 0.05, method: str = "greedy", k: int | None = None, seed=None):
    """Merge sign-equivalent directions; representatives sorted by multiplicity (stable)."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if method == "greedy":
        reps, counts = _greedy_clusters(raw, delta)
    elif method == "kmeans":
        if k is None:
            raise ValueError("k-means clustering needs k")
        reps, counts = _kmeans_clusters(raw, k, np.random.default_rng(seed))
    else:
        raise ValueError(f"unknown clustering method {method!r}")
    reps = sign_fix(reps.T).T
    order = np.argsort(-counts, kind="stable")
    return reps[order], counts[order]


def collect_directions(
    space: MatrixSubspace,
    n_rep: int = 180,
    gamma: float = 2.0,
    steps: int = 100,
    dedup_delta: float = 0.05,
    seed=0,
    clustering: str = "greedy",
    tol: float = 0.0,
    backend: str | None = None,
) -> DirectionSet:
    """Run the maximizer from ``n_rep`` independent starts and cluster the results.

    Restart ``r`` uses the ``r``-th child of ``SeedSequence(seed)``, so results
    do not depend on execution order.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(n_rep)
    raw = np.empty((n_rep, space.side))
    norms = np.empty(n_rep)
    for r, child in enumerate(children):
        st = find_local_maximizer(space, gamma, steps, np.random.default_rng(child), tol, backend)
        raw[r] = extract_direction(st.X)
        norms[r] = st.history[-1]
    cseed = np.random.default_rng(ss.spawn(1)[0])
    reps, counts = cluster_directions(raw, dedup_delta, clustering, k=space.rank, seed=cseed)
    return DirectionSet(reps, counts, raw, norms)


def coupon_collector_expectation(m: int) -> float:
    """Expected draws to see all ``m`` equally likely items, ``m H_m`` (asymptotic form)."""
    return m * np.log(m) + 0.5772156649015329 * m + 0.5
