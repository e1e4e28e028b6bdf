"""Black-box query access to f plus the derivative estimators built on it.

Every function value the identification pipeline sees goes through a
:class:`QueryOracle`, which adds bounded noise and counts queries.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

__all__ = [
    "DEFAULT_DOMAIN_RADIUS",
    "DomainError",
    "DensityError",
    "QueryOracle",
    "PullbackOracle",
    "gradient_fd",
    "hessian_fd",
    "hessians_fd",
    "hessian_fd_cost",
    "BumpFamily",
    "weak_gradient",
    "weak_hessian",
    "sample_sphere",
    "sample_ball",
]

# f is defined on a neighborhood of the closed unit ball; finite-difference
# stencils around sphere points step slightly outside it.
DEFAULT_DOMAIN_RADIUS = 1.05


class DomainError(ValueError):
    """A query point lies outside the admissible domain."""


class DensityError(ValueError):
    """The sampling density vanishes at a sample point."""


def sample_sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def sample_ball(rng: np.random.Generator, n: int, d: int, radius: float = 1.0) -> np.ndarray:
    r = radius * rng.random(n) ** (1.0 / d)
    return sample_sphere(rng, n, d) * r[:, None]


class QueryOracle:
    """Noisy, counted point evaluations of a vectorized target ``f``.

    ``target`` maps an ``(n, d)`` batch to ``n`` values.  Each evaluated point
    costs one query and receives an independent noise draw, uniform on
    ``[-noise_bound, noise_bound]`` unless ``noise="none"``.
    """

    def __init__(
        self,
        target: Callable[[np.ndarray], np.ndarray],
        dim: int,
        noise_bound: float = 0.0,
        noise: str = "uniform",
        seed=None,
        domain_radius: float = DEFAULT_DOMAIN_RADIUS,
    ):
        if noise not in ("uniform", "none"):
            raise ValueError(f"unknown noise distribution {noise!r}")
        if noise_bound < 0:
            raise ValueError("noise_bound must be non-negative")
        self.target = target
        self.dim = int(dim)
        self.noise_bound = float(noise_bound)
        self.noise = noise
        self.domain_radius = float(domain_radius)
        self.rng = np.random.default_rng(seed)
        self.query_count = 0

    def _check(self, X: np.ndarray) -> None:
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {X.shape}")
        norms = np.linalg.norm(X, axis=1)
        if norms.size and norms.max() > self.domain_radius * (1 + 1e-12):
            raise DomainError(
                f"query at norm {norms.max():.6g} outside radius {self.domain_radius}"
            )

    def _noise(self, n: int) -> np.ndarray:
        if self.noise == "none" or self.noise_bound == 0.0:
            return np.zeros(n)
        return self.rng.uniform(-self.noise_bound, self.noise_bound, size=n)

    def query_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check(X)
        self.query_count += X.shape[0]
        return np.asarray(self.target(X), dtype=float).reshape(-1) + self._noise(X.shape[0])

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.query_batch(x[None, :])[0])


class PullbackOracle(QueryOracle):
    """Oracle for ``x -> f(M x)`` that forwards every query to a parent oracle.

    The parent counts and perturbs the queries; this object keeps its own count
    of the queries routed through it.
    """

    def __init__(self, parent: QueryOracle, M, domain_radius: float | None = None):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != parent.dim:
            raise ValueError("M must have shape (parent.dim, k)")
        self.parent = parent
        self.M = M
        self.dim = M.shape[1]
        self.domain_radius = parent.domain_radius if domain_radius is None else domain_radius
        self.noise_bound = parent.noise_bound
        self.noise = parent.noise
        self.query_count = 0

    def query_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check(X)
        self.query_count += X.shape[0]
        return self.parent.query_batch(X @ self.M.T)

    def root(self) -> QueryOracle:
        o = self.parent
        while isinstance(o, PullbackOracle):
            o = o.parent
        return o


def gradient_fd(oracle: QueryOracle, x, h: float = 1e-3) -> np.ndarray:
    """Forward-difference gradient, ``d + 1`` queries (the base value is shared)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    pts = np.vstack([x, x + h * np.eye(d)])
    vals = oracle.query_batch(pts)
    return (vals[1:] - vals[0]) / h


def hessian_fd_cost(d: int) -> int:
    return (d + 1) * (d + 2) // 2


def _hessian_stencil(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Offsets of the second-difference stencil and index maps into them."""
    iu, ju = np.triu_indices(d)
    eye = np.eye(d)
    offsets = np.vstack([np.zeros((1, d)), eye, eye[iu] + eye[ju]])
    return offsets, iu, ju


def hessians_fd(oracle: QueryOracle, X, h: float = 1e-3) -> np.ndarray:
    """Second-difference Hessians at each row of ``X``; returns ``(n, d, d)``.

    Per point the stencil uses f(x), f(x + h e_j) and f(x + h(e_j + e_k)) for
    j <= k, i.e. ``(d + 1)(d + 2) / 2`` queries.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    offsets, iu, ju = _hessian_stencil(d)
    pts = (X[:, None, :] + h * offsets[None, :, :]).reshape(-1, d)
    F = oracle.query_batch(pts).reshape(n, -1)
    f0 = F[:, 0]
    fj = F[:, 1 : d + 1]
    fjk = F[:, d + 1 :]
    upper = (fjk - fj[:, iu] - fj[:, ju] + f0[:, None]) / (h * h)
    H = np.empty((n, d, d))
    H[:, iu, ju] = upper
    H[:, ju, iu] = upper
    return H


def hessian_fd(oracle: QueryOracle, x, h: float = 1e-3) -> np.ndarray:
    return hessians_fd(oracle, np.asarray(x, dtype=float)[None, :], h)[0]


class BumpFamily:
    """Smooth bumps ``exp(-1 / (1 - |x - c|^2 / r^2))`` against the uniform density on the ball.

    A test-function index ``nu`` is the bump center ``c``; centers are drawn
    uniformly from the ball of radius ``1 - r`` so every support stays inside
    the unit ball.
    """

    def __init__(self, dim: int, radius: float = 0.3):
        if not 0 < radius < 1:
            raise ValueError("bump radius must lie in (0, 1)")
        self.dim = dim
        self.radius = radius
        self.volume = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
        s = np.linspace(0.0, 1.0, 20001)[:-1]
        psi, dpsi, ddpsi = self._profile(s)
        r = radius
        grad_norm = np.abs(dpsi) * 2.0 * np.sqrt(s) / r
        radial = (4.0 * s * ddpsi + 2.0 * dpsi) / r**2
        tangential = 2.0 * dpsi / r**2
        self.gradient_bound = float(self.volume * grad_norm.max())
        self.hessian_bound = float(self.volume * max(np.abs(radial).max(), np.abs(tangential).max()))

    @staticmethod
    def _profile(s):
        s = np.asarray(s, dtype=float)
        inside = s < 1.0
        q = np.where(inside, 1.0 - s, 1.0)
        psi = np.where(inside, np.exp(-1.0 / q), 0.0)
        dpsi = -psi / q**2
        ddpsi = psi * (2.0 * s - 1.0) / q**4
        return psi, dpsi, ddpsi

    def density(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        inside = np.linalg.norm(X, axis=1) <= 1.0
        return np.where(inside, 1.0 / self.volume, 0.0)

    def sample_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample_ball(rng, n, self.dim)

    def sample_nu(self, rng: np.random.Generator) -> np.ndarray:
        return sample_ball(rng, 1, self.dim, 1.0 - self.radius)[0]

    def _local(self, nu, X):
        U = np.atleast_2d(X) - np.asarray(nu)[None, :]
        s = np.einsum("ij,ij->i", U, U) / self.radius**2
        return U, s

    def phi(self, nu, X) -> np.ndarray:
        _, s = self._local(nu, X)
        return self._profile(s)[0]

    def grad(self, nu, X) -> np.ndarray:
        U, s = self._local(nu, X)
        _, dpsi, _ = self._profile(s)
        return (2.0 / self.radius**2) * dpsi[:, None] * U

    def hess(self, nu, X) -> np.ndarray:
        U, s = self._local(nu, X)
        _, dpsi, ddpsi = self._profile(s)
        r2 = self.radius**2
        outer = np.einsum("ni,nj->nij", U, U)
        return (4.0 / r2**2) * ddpsi[:, None, None] * outer + (2.0 / r2) * dpsi[:, None, None] * np.eye(
            self.dim
        )[None]


def _density_at(family, points) -> np.ndarray:
    p = family.density(points)
    if np.any(p < 1e-12):
        raise DensityError("sampling density below 1e-12 at a sample point")
    return p


def weak_gradient(oracle: QueryOracle, family, nu, points) -> np.ndarray:
    """``-(1/N) sum_k f(x_k) grad phi_nu(x_k) / p(x_k)``; ``N`` queries."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p = _density_at(family, points)
    vals = oracle.query_batch(points)
    return -np.mean((vals / p)[:, None] * family.grad(nu, points), axis=0)


def weak_hessian(oracle: QueryOracle, family, nu, points) -> np.ndarray:
    """``(1/N) sum_k f(x_k) hess phi_nu(x_k) / p(x_k)``, symmetrized; ``N`` queries."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p = _density_at(family, points)
    vals = oracle.query_batch(points)
    H = np.einsum("n,nij->ij", vals / p, family.hess(nu, points)) / points.shape[0]
    return 0.5 * (H + H.T)
