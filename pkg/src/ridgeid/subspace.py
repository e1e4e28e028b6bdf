"""Recovery of span{a_i} and span{a_i a_i^T} from sampled derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import PullbackOracle, QueryOracle, hessians_fd, sample_sphere

__all__ = [
    "RankDeficiencyError",
    "VectorSubspace",
    "MatrixSubspace",
    "sign_fix",
    "recover_vector_space",
    "recover_matrix_space",
    "detect_rank",
    "reduce_dimension",
    "projection_distance",
    "wedin_bound",
    "estimate_conditioning",
    "perturb_subspace",
    "matrix_space_from_vectors",
]

RANK_TOL = 1e-12


class RankDeficiencyError(ValueError):
    """Too few or too degenerate samples to determine a subspace of the target rank."""


def sign_fix(columns: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    C = np.array(columns, dtype=float, copy=True)
    idx = np.argmax(np.abs(C), axis=0)
    signs = np.sign(C[idx, np.arange(C.shape[1])])
    signs[signs == 0] = 1.0
    return C * signs


@dataclass(frozen=True)
class VectorSubspace:
    """Subspace of R^d spanned by the orthonormal columns of ``basis`` (d x k)."""

    basis: np.ndarray
    singular_values: np.ndarray | None = None

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def vec_basis(self) -> np.ndarray:
        """Orthonormal basis as rows, shape ``(k, d)``."""
        return self.basis.T

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def project(self, x) -> np.ndarray:
        return self.basis @ (self.basis.T @ np.asarray(x, dtype=float))


@dataclass(frozen=True)
class MatrixSubspace:
    """Subspace of symmetric m x m matrices with Frobenius-orthonormal basis ``(k, m, m)``.

    Matrices are vectorized row by row.
    """

    basis: np.ndarray
    singular_values: np.ndarray | None = None

    @property
    def side(self) -> int:
        return self.basis.shape[1]

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    def vec_basis(self) -> np.ndarray:
        """Orthonormal basis as rows, shape ``(k, m*m)``."""
        return self.basis.reshape(self.rank, -1)

    def projector(self) -> np.ndarray:
        Q = self.vec_basis()
        return Q.T @ Q

    def coefficients(self, X) -> np.ndarray:
        return self.vec_basis() @ np.asarray(X, dtype=float).reshape(-1)

    def project(self, X) -> np.ndarray:
        c = self.coefficients(X)
        return (c @ self.vec_basis()).reshape(self.side, self.side)

    def from_coefficients(self, c) -> np.ndarray:
        return np.tensordot(np.asarray(c, dtype=float), self.basis, axes=1)


def _top_left_singular(Y: np.ndarray, rank: int, backend: str, seed) -> tuple[np.ndarray, np.ndarray]:
    if backend == "svd":
        U, s, _ = np.linalg.svd(Y, full_matrices=False)
    elif backend == "randomized":
        from sklearn.utils.extmath import randomized_svd

        U, s, _ = randomized_svd(Y, rank + 1 if rank < min(Y.shape) else rank, random_state=seed)
    else:
        raise ValueError(f"unknown SVD backend {backend!r}")
    if s.size < rank or s[rank - 1] < RANK_TOL * s[0]:
        raise RankDeficiencyError(
            f"sample matrix has numerical rank below {rank} "
            f"(sigma_{rank} / sigma_1 = {s[rank - 1] / s[0] if s.size >= rank and s[0] > 0 else 0.0:.3g})"
        )
    return U[:, :rank], s


def recover_vector_space(samples, target_rank: int, backend: str = "svd", seed=None) -> VectorSubspace:
    """Span of the top ``target_rank`` left singular vectors of the ``d x m_X`` sample matrix."""
    Y = np.asarray(samples, dtype=float)
    if Y.ndim != 2:
        raise ValueError("samples must be a d x m_X matrix with one sample per column")
    if Y.shape[1] < target_rank:
        raise RankDeficiencyError(f"need at least {target_rank} samples, got {Y.shape[1]}")
    U, s = _top_left_singular(Y, target_rank, backend, seed)
    return VectorSubspace(sign_fix(U), s)


def recover_matrix_space(samples, target_rank: int, backend: str = "svd", seed=None) -> MatrixSubspace:
    """Span of the top ``target_rank`` singular directions of vectorized symmetric samples.

    ``samples`` has shape ``(m_X, m, m)``.
    """
    H = np.asarray(samples, dtype=float)
    if H.ndim != 3 or H.shape[1] != H.shape[2]:
        raise ValueError("samples must have shape (m_X, m, m)")
    n, m, _ = H.shape
    if n < target_rank:
        raise RankDeficiencyError(f"need at least {target_rank} samples, got {n}")
    Y = H.reshape(n, m * m).T
    U, s = _top_left_singular(Y, target_rank, backend, seed)
    B = sign_fix(U).T.reshape(target_rank, m, m)
    B = 0.5 * (B + np.swapaxes(B, 1, 2))
    return MatrixSubspace(B, s)


def detect_rank(singular_values, max_rank: int | None = None) -> int:
    """Index ``k`` maximizing the spectral gap ``sigma_k / sigma_{k+1}`` (1-based)."""
    s = np.asarray(singular_values, dtype=float)
    if s.size < 2:
        return int(s.size)
    kmax = s.size - 1 if max_rank is None else min(max_rank, s.size - 1)
    ratios = s[:kmax] / np.maximum(s[1 : kmax + 1], 1e-15)
    return int(np.argmax(ratios)) + 1


def reduce_dimension(oracle: QueryOracle, space: VectorSubspace) -> PullbackOracle:
    """Oracle for ``y -> f(B y)`` on R^m, with ``B`` the basis of ``space``."""
    return PullbackOracle(oracle, space.basis)


def _rows(space) -> np.ndarray:
    if isinstance(space, (VectorSubspace, MatrixSubspace)):
        return space.vec_basis()
    return np.asarray(space, dtype=float)


def projection_distance(space1, space2, norm: str = "fro") -> float:
    """``||P_1 - P_2||`` for two subspaces of the same ambient space.

    ``norm="fro"`` is the Frobenius (Hilbert-Schmidt) norm, ``norm="op"`` the
    operator norm.  Both come from the sines of the principal angles.
    """
    Q1, Q2 = _rows(space1), _rows(space2)
    # residuals give the sines of the principal angles without cancellation
    R21 = Q2 - (Q2 @ Q1.T) @ Q1
    R12 = Q1 - (Q1 @ Q2.T) @ Q2
    if norm == "fro":
        return float(np.sqrt(np.sum(R21**2) + np.sum(R12**2)))
    if norm == "op":
        if Q1.shape[0] != Q2.shape[0]:
            return 1.0
        return float(np.linalg.norm(R21, 2)) if R21.size else 0.0
    raise ValueError(f"unknown norm {norm!r}")


def wedin_bound(B, B_tilde, k: int) -> float:
    """Upper bound on the projector distance between the top-``k`` singular subspaces.

    Returns ``sqrt(2) ||B - B_tilde||_F / alpha`` where ``alpha`` is the smaller of
    the separation between the top-``k`` singular values of ``B_tilde`` and the
    trailing singular values of ``B``, and the ``k``-th singular value of ``B_tilde``.
    The bound holds for both the left and the right singular subspaces.
    """
    B = np.asarray(B, dtype=float)
    Bt = np.asarray(B_tilde, dtype=float)
    if B.shape != Bt.shape:
        raise ValueError("B and B_tilde must have equal shapes")
    s = np.linalg.svd(B, compute_uv=False)
    st = np.linalg.svd(Bt, compute_uv=False)
    top = st[:k]
    tail = s[k:]
    if B.shape[0] != B.shape[1]:
        # a rectangular matrix has extra zero singular directions on its long side
        tail = np.append(tail, 0.0)
    alpha = top.min()
    if tail.size:
        alpha = min(alpha, np.abs(top[:, None] - tail[None, :]).min())
    if alpha <= 0:
        raise ValueError("singular value gap is zero; the bound is undefined")
    return float(np.sqrt(2.0) * np.linalg.norm(B - Bt) / alpha)


def estimate_conditioning(
    source,
    order: int,
    n_mc: int = 10_000,
    rank: int | None = None,
    seed=0,
    h: float = 1e-3,
    chunk: int = 2_000,
) -> float:
    """Monte Carlo estimate of the ``rank``-th eigenvalue of the derivative second moment.

    ``order=1`` uses ``E[grad f grad f^T]`` and ``order=2`` uses
    ``E[vec H vec H^T]``, both over the uniform measure on the unit sphere.
    ``source`` is either an object with analytic ``grad``/``hess`` (a network)
    or a :class:`QueryOracle`, in which case forward and second differences
    with step ``h`` are used.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    analytic = hasattr(source, "grad") and hasattr(source, "hess")
    if rank is None:
        if not hasattr(source, "num_units_m"):
            raise ValueError("rank is required for oracle sources")
        rank = source.num_units_m
    d = source.dim_d if analytic else source.dim
    rng = np.random.default_rng(seed)
    X = sample_sphere(rng, n_mc, d)
    D = d if order == 1 else d * d
    G = np.zeros((D, D))
    for start in range(0, n_mc, chunk):
        Xc = X[start : start + chunk]
        if order == 1:
            if analytic:
                Y = source.grad(Xc)
            else:
                f0 = source.query_batch(Xc)
                Y = np.stack(
                    [(source.query_batch(Xc + h * e) - f0) / h for e in np.eye(d)], axis=1
                )
        else:
            Hs = source.hess(Xc) if analytic else hessians_fd(source, Xc, h)
            Y = Hs.reshape(len(Xc), D)
        G += Y.T @ Y
    G /= n_mc
    ev = np.linalg.eigvalsh(G)[::-1]
    return float(max(ev[rank - 1], 0.0))


def perturb_subspace(space, eta: float, rng: np.random.Generator):
    """Subspace at operator-norm projector distance exactly ``eta`` from ``space``.

    Every principal angle equals ``arcsin(eta)``.  Matrix subspaces are perturbed
    within the symmetric matrices.
    """
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    Q = _rows(space)
    k, n = Q.shape
    if isinstance(space, MatrixSubspace):
        m = space.side
        E = rng.standard_normal((k, m, m))
        E = (E + np.swapaxes(E, 1, 2)).reshape(k, n)
    else:
        E = rng.standard_normal((k, n))
    E = E - (E @ Q.T) @ Q
    E = np.linalg.qr(E.T)[0].T
    E = E - (E @ Q.T) @ Q
    E = np.linalg.qr(E.T)[0].T
    Qt = np.sqrt(1.0 - eta**2) * Q + eta * E
    if isinstance(space, MatrixSubspace):
        B = Qt.reshape(k, space.side, space.side)
        return MatrixSubspace(0.5 * (B + np.swapaxes(B, 1, 2)))
    return VectorSubspace(Qt.T)


def matrix_space_from_vectors(vectors) -> MatrixSubspace:
    """Orthonormal basis of span{a_i a_i^T} for the columns ``a_i`` of ``vectors``."""
    A = np.asarray(vectors, dtype=float)
    outer = np.einsum("ik,jk->kij", A, A).reshape(A.shape[1], -1)
    Q = np.linalg.qr(outer.T)[0].T
    B = Q.reshape(A.shape[1], A.shape[0], A.shape[0])
    return MatrixSubspace(0.5 * (B + np.swapaxes(B, 1, 2)))
