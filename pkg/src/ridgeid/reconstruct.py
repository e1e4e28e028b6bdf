"""Profile tabulation along dual directions and assembly of the ridge approximant."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .oracle import QueryOracle, sample_ball

__all__ = [
    "ExtrapolationError",
    "dual_basis",
    "ProfileTable",
    "tabulate_profiles",
    "RidgeApproximant",
    "assemble",
    "reconstruct",
    "reconstruction_cost",
    "uniform_error",
]

# keep tabulation nodes strictly inside the admissible interval
_ENDPOINT_PULL = 1e-9


class ExtrapolationError(ValueError):
    """An evaluation falls outside the tabulated interval of a profile."""


def dual_basis(directions) -> np.ndarray:
    """Columns ``b_j`` with ``a_i . b_j = delta_ij``, i.e. ``(A^T)^{-1}`` for columns ``a_i`` of ``A``."""
    A = np.asarray(directions, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("directions must be a square matrix with one direction per column")
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] < 1e-8:
        raise np.linalg.LinAlgError(f"directions are nearly dependent (sigma_min = {s[-1]:.3g})")
    return np.linalg.inv(A.T)


@dataclass(frozen=True)
class ProfileTable:
    """Samples ``g_j(t) = f(t b_j)`` on ``|t| < 1 / ||b_j||`` with a not-a-knot cubic spline."""

    grid: np.ndarray
    values: np.ndarray
    spline: CubicSpline
    index: int = 0

    @property
    def half_width(self) -> float:
        return float(-self.grid[0])

    def __call__(self, t, extrapolate: bool = False) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not extrapolate and t.size and np.abs(t).max() > self.half_width * (1 + 1e-12):
            raise ExtrapolationError(
                f"profile evaluated at |t| = {np.abs(t).max():.6g} beyond {self.half_width:.6g}"
            )
        return self.spline(t)


def tabulate_profiles(oracle: QueryOracle, duals, n_grid: int = 256, f_zero: float = 0.0) -> list[ProfileTable]:
    """``m * n_grid`` queries: each profile on an equispaced grid, shifted by ``f_zero``."""
    B = np.asarray(duals, dtype=float)
    if n_grid < 16:
        raise ValueError("n_grid must be at least 16")
    tables = []
    for j in range(B.shape[1]):
        b = B[:, j]
        T = 1.0 / np.linalg.norm(b) - _ENDPOINT_PULL
        t = np.linspace(-T, T, n_grid)
        vals = oracle.query_batch(t[:, None] * b[None, :]) - f_zero
        tables.append(ProfileTable(t, vals, CubicSpline(t, vals), j))
    return tables


class RidgeApproximant:
    """``x -> offset + sum_j g_j(a_j . x)`` from directions (columns) and profile tables."""

    def __init__(
        self, directions, profiles: list[ProfileTable], extrapolate: bool = False, offset: float = 0.0
    ):
        self.directions = np.asarray(directions, dtype=float)
        self.profiles = list(profiles)
        self.extrapolate = extrapolate
        self.offset = float(offset)
        if self.directions.shape[1] != len(self.profiles):
            raise ValueError("need one profile per direction")

    def projections(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.directions

    def extrapolated_fraction(self, X) -> float:
        """Fraction of (point, unit) projections outside the tabulated intervals."""
        P = self.projections(X)
        widths = np.array([p.half_width for p in self.profiles])
        return float(np.mean(np.abs(P) > widths[None, :] * (1 + 1e-12)))

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        P = self.projections(X)
        out = np.full(P.shape[0], self.offset)
        for j, prof in enumerate(self.profiles):
            out += prof(P[:, j], extrapolate=self.extrapolate)
        return float(out[0]) if X.ndim == 1 else out


def assemble(directions, profiles, extrapolate: bool = False, offset: float = 0.0) -> RidgeApproximant:
    return RidgeApproximant(directions, profiles, extrapolate, offset)


def reconstruction_cost(m: int, n_grid: int) -> int:
    return m * n_grid + 1


def reconstruct(oracle: QueryOracle, directions, n_grid: int = 256, extrapolate: bool = False) -> RidgeApproximant:
    """Full profile reconstruction; ``m * n_grid + 1`` queries including ``f(0)``."""
    A = np.asarray(directions, dtype=float)
    f0 = oracle(np.zeros(A.shape[0]))
    tables = tabulate_profiles(oracle, dual_basis(A), n_grid, f0)
    return assemble(A, tables, extrapolate, f0)


def uniform_error(f, f_hat, n_test: int = 100_000, seed=0, dim: int | None = None) -> tuple[float, float]:
    """Sup and mean squared error of ``f_hat`` against ``f`` at uniform points of the unit ball."""
    if dim is None:
        dim = f_hat.directions.shape[0]
    X = sample_ball(np.random.default_rng(seed), n_test, dim)
    err = np.asarray(f(X)) - np.asarray(f_hat(X))
    return float(np.abs(err).max()), float(np.mean(err**2))
