"""Ground-truth sums of ridge functions (shallow tanh networks).

A network is ``f(x) = sum_i b_i * (g(a_i . x + theta_i) - g(theta_i))`` with unit
columns ``a_i`` of the weight matrix ``A``.  The constant shift makes ``f(0) = 0``
and every profile vanish at the origin.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Activation",
    "TANH",
    "RidgeNetwork",
    "NearOrthMeasure",
    "near_orthonormality",
    "haar_orthogonal",
    "generate_network",
    "GenerationError",
]

Func = Callable[[np.ndarray], np.ndarray]

# standard deviation of the scales b_i ~ N(1, .) and offsets theta_i ~ N(0, .)
PARAM_STD = 0.2


class GenerationError(RuntimeError):
    """Raised when a network with the requested near-orthonormality cannot be built."""


@dataclass(frozen=True)
class Activation:
    name: str
    eval: Func
    d1: Func
    d2: Func
    d3: Func

    def derivative(self, order: int) -> Func:
        return (self.eval, self.d1, self.d2, self.d3)[order]


def _tanh_d1(t):
    th = np.tanh(t)
    return 1.0 - th * th


def _tanh_d2(t):
    th = np.tanh(t)
    return -2.0 * th * (1.0 - th * th)


def _tanh_d3(t):
    th = np.tanh(t)
    return -2.0 * (1.0 - th * th) * (1.0 - 3.0 * th * th)


TANH = Activation("tanh", np.tanh, _tanh_d1, _tanh_d2, _tanh_d3)

_ACTIVATIONS = {"tanh": TANH}


@dataclass(frozen=True)
class NearOrthMeasure:
    s_value: float
    closest_basis: np.ndarray


def near_orthonormality(vectors) -> NearOrthMeasure:
    """Distance of a vector system to the closest orthonormal system.

    ``vectors`` is an ``(n, m)`` array whose columns are the vectors.  The
    distance equals ``sqrt(sum (sigma_i - 1)^2)`` over the singular values and
    is attained by ``U V^T`` from the thin SVD.
    """
    A = np.asarray(vectors, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-d array with vectors as columns")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return NearOrthMeasure(float(np.sqrt(np.sum((s - 1.0) ** 2))), U @ Vt)


def haar_orthogonal(rng: np.random.Generator, n: int, k: int | None = None) -> np.ndarray:
    """``n x k`` matrix with Haar-distributed orthonormal columns."""
    k = n if k is None else k
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


@dataclass(frozen=True)
class RidgeNetwork:
    weights: np.ndarray
    scales: np.ndarray
    offsets: np.ndarray
    activation: Activation = TANH
    seed: int | None = None
    _shift: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = np.array(self.weights, dtype=float, copy=True)
        b = np.array(self.scales, dtype=float, copy=True).reshape(-1)
        th = np.array(self.offsets, dtype=float, copy=True).reshape(-1)
        if A.ndim != 2:
            raise ValueError("weights must be a d x m matrix")
        d, m = A.shape
        if m > d:
            raise ValueError(f"need m <= d, got m={m}, d={d}")
        if b.shape != (m,) or th.shape != (m,):
            raise ValueError("scales and offsets must have length m")
        norms = np.linalg.norm(A, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("weight columns must have unit Euclidean norm")
        if np.linalg.svd(A, compute_uv=False)[-1] <= 1e-10:
            raise ValueError("weight columns are linearly dependent")
        for arr in (A, b, th):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", A)
        object.__setattr__(self, "scales", b)
        object.__setattr__(self, "offsets", th)
        object.__setattr__(self, "_shift", float(b @ self.activation.eval(th)))

    @property
    def dim_d(self) -> int:
        return self.weights.shape[0]

    @property
    def num_units_m(self) -> int:
        return self.weights.shape[1]

    def eval(self, x) -> np.ndarray | float:
        """Evaluate at a point ``(d,)`` or a batch ``(n, d)``."""
        x = np.asarray(x, dtype=float)
        z = x @ self.weights + self.offsets
        out = self.activation.eval(z) @ self.scales - self._shift
        return float(out) if x.ndim == 1 else out

    __call__ = eval

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = x @ self.weights + self.offsets
        return (self.activation.d1(z) * self.scales) @ self.weights.T

    def hess(self, x) -> np.ndarray:
        """Hessian ``sum_i g_i''(a_i . x) a_i a_i^T``; batched input gives ``(n, d, d)``."""
        x = np.asarray(x, dtype=float)
        z = x @ self.weights + self.offsets
        c = self.activation.d2(z) * self.scales
        A = self.weights
        H = np.einsum("...i,ji,ki->...jk", c, A, A)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def profile(self, i: int, t) -> np.ndarray:
        """Normalized profile ``g_i(t) = b_i (g(t + theta_i) - g(theta_i))``."""
        g = self.activation.eval
        return self.scales[i] * (g(np.asarray(t) + self.offsets[i]) - g(self.offsets[i]))

    def derivative_bounds(self, n_grid: int = 10001) -> tuple[float, float, float, float]:
        """Grid maxima of ``|g_i^(j)|`` over ``[-1, 1]`` for j = 0..3, maximized over units."""
        t = np.linspace(-1.0, 1.0, n_grid)[:, None] + self.offsets[None, :]
        bounds = []
        for order in range(4):
            vals = self.activation.derivative(order)(t)
            if order == 0:
                vals = vals - self.activation.eval(self.offsets)[None, :]
            bounds.append(float(np.max(np.abs(vals * self.scales))))
        return tuple(bounds)

    def near_orthonormality(self) -> NearOrthMeasure:
        return near_orthonormality(self.weights)

    def with_weights(self, weights) -> "RidgeNetwork":
        return RidgeNetwork(weights, self.scales, self.offsets, self.activation, self.seed)

    # serialization

    def to_dict(self) -> dict:
        d, m = self.weights.shape
        return {
            "m": m,
            "d": d,
            "A": self.weights.flatten(order="F").tolist(),
            "b": self.scales.tolist(),
            "theta": self.offsets.tolist(),
            "activation": self.activation.name,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RidgeNetwork":
        m, d = int(doc["m"]), int(doc["d"])
        A = np.asarray(doc["A"], dtype=float).reshape((d, m), order="F")
        act = _ACTIVATIONS[doc.get("activation", "tanh")]
        return cls(A, doc["b"], doc["theta"], act, doc.get("seed"))

    def to_json(self) -> str:
        # float repr is the shortest string (<= 17 significant digits) that round-trips
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RidgeNetwork":
        return cls.from_dict(json.loads(text))


def _normalized(U, s, Vt):
    A = (U * s) @ Vt
    return A / np.linalg.norm(A, axis=0)


def generate_network(
    m: int,
    d: int,
    eps_target: float,
    seed: int,
    tol: float = 1e-3,
    max_iter: int = 200,
    spread: float = PARAM_STD,
) -> RidgeNetwork:
    """Random tanh network whose weights are ``eps_target``-nearly-orthonormal.

    Starts from a Haar matrix and repeatedly perturbs the singular values of the
    current weights by Gaussian noise, renormalizing the columns after each step.
    Steps that stay below the target are accepted.  The first step that overshoots
    is bisected: its noise draw is kept fixed and the noise scale is halved
    toward the crossing until the distance to orthonormality is within ``tol``.
    Scales ``b_i`` and offsets ``theta_i`` are normal around 1 and 0 with standard
    deviation ``spread``.  Deterministic for a fixed seed.
    """
    if m > d:
        raise ValueError(f"need m <= d, got m={m}, d={d}")
    if eps_target < 0 or eps_target >= np.sqrt(m):
        raise ValueError(f"eps_target must lie in [0, sqrt(m)), got {eps_target}")
    rng = np.random.default_rng(seed)
    # explicit Haar factors: the SVD of an orthogonal matrix is degenerate
    U, s, Vt = haar_orthogonal(rng, d, m), np.ones(m), haar_orthogonal(rng, m).T
    A = U @ Vt
    b = rng.normal(1.0, spread, size=m)
    theta = rng.normal(0.0, spread, size=m)

    # one step moves the distance by about a quarter of the target
    std = 0.25 * eps_target / np.sqrt(m)
    s_cur = 0.0
    it = 0

    def budget():
        nonlocal it
        it += 1
        if it > max_iter:
            raise GenerationError(
                f"could not reach eps={eps_target} +- {tol} within {max_iter} steps (m={m})"
            )

    while abs(s_cur - eps_target) > tol:
        budget()
        z = rng.standard_normal(m)
        cand = _normalized(U, s + std * z, Vt)
        s_cand = near_orthonormality(cand).s_value
        if s_cand <= eps_target + tol:
            A, s_cur = cand, s_cand
            U, s, Vt = np.linalg.svd(A, full_matrices=False)
            continue
        lo, hi = 0.0, 1.0
        while abs(s_cand - eps_target) > tol:
            budget()
            mid = 0.5 * (lo + hi)
            cand = _normalized(U, s + mid * std * z, Vt)
            s_cand = near_orthonormality(cand).s_value
            if s_cand < eps_target:
                lo = mid
            else:
                hi = mid
        A, s_cur = cand, s_cand
    return RidgeNetwork(A, b, theta, TANH, seed)
