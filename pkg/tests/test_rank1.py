import logging

import numpy as np
import pytest

from ridgeid.model import generate_network, haar_orthogonal
from ridgeid.rank1 import (
    cluster_directions,
    collect_directions,
    contraction_rate,
    coupon_collector_expectation,
    extract_direction,
    find_local_maximizer,
    pi_gamma,
)
from ridgeid.subspace import MatrixSubspace, matrix_space_from_vectors, perturb_subspace


def match_error(u, A):
    """Distance from ``u`` to the closest of the columns ``+-a_i``."""
    return min(min(np.linalg.norm(u - a), np.linalg.norm(u + a)) for a in A.T)


class TestPiGamma:
    def test_rank_one_is_fixed(self):
        a = np.array([0.6, 0.8, 0.0])
        X = np.outer(a, a)
        np.testing.assert_allclose(pi_gamma(X), X, atol=1e-15)

    def test_diagonal_example(self):
        Y = pi_gamma(np.diag([0.8, 0.6]), 2.0)
        # (1.6, 0.6) / sqrt(2.56 + 0.36)
        np.testing.assert_allclose(np.diag(Y), [0.9363291775690445, 0.3511234415883917], atol=1e-14)

    def test_unit_frobenius(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert np.linalg.norm(pi_gamma(rng.standard_normal((4, 4)), 1.7)) == pytest.approx(1.0, abs=1e-12)

    def test_zero_matrix(self):
        with pytest.raises(ValueError):
            pi_gamma(np.zeros((3, 3)))

    def test_gamma_must_exceed_one(self):
        with pytest.raises(ValueError):
            pi_gamma(np.eye(2), 1.0)


class TestLocalMaximizer:
    def test_exact_orthonormal_case(self):
        Q = haar_orthogonal(np.random.default_rng(0), 8)
        space = matrix_space_from_vectors(Q)
        for seed in range(5):
            st = find_local_maximizer(space, 2.0, 100, seed=seed)
            assert abs(1 - st.history[-1]) <= 1e-8
            assert match_error(extract_direction(st.X), Q) <= 1e-6
            assert st.steps_taken == 100 and len(st.history) == 101

    def test_contraction(self):
        gamma = 2.0
        Q = haar_orthogonal(np.random.default_rng(1), 10)
        space = matrix_space_from_vectors(Q)
        checked = 0
        for seed in range(20):
            hist = find_local_maximizer(space, gamma, 30, seed=seed).history
            if hist[0] <= 1 / np.sqrt(gamma**2 - 1):
                continue
            mu = contraction_rate(gamma, hist[0])
            err = np.abs(1 - hist)
            ok = err[1:] <= mu * err[:-1] + 1e-15
            assert ok.all()
            checked += 1
        assert checked > 0

    def test_monotone_spectral_norm(self):
        space = matrix_space_from_vectors(haar_orthogonal(np.random.default_rng(2), 6))
        hist = find_local_maximizer(space, 2.0, 50, seed=3).history
        assert np.all(np.diff(hist) >= -1e-12)

    def test_one_dimensional_space_converges_immediately(self):
        v = np.array([1.0, 2.0, 2.0]) / 3
        space = MatrixSubspace(np.outer(v, v)[None])
        st = find_local_maximizer(space, 2.0, 1, seed=0)
        np.testing.assert_allclose(np.abs(st.X), np.outer(v, v), atol=1e-14)

    def test_iterates_stay_in_space(self):
        net = generate_network(5, 5, 0.5, seed=0)
        space = matrix_space_from_vectors(net.weights)
        st = find_local_maximizer(space, 2.0, 40, seed=1)
        assert np.linalg.norm(st.X - space.project(st.X)) <= 1e-10
        assert np.linalg.norm(st.X) <= 1 + 1e-10

    def test_first_order_condition(self):
        net = generate_network(6, 6, 0.3, seed=4)
        space = matrix_space_from_vectors(net.weights)
        M = find_local_maximizer(space, 2.0, 200, seed=2).X
        lam, V = np.linalg.eigh(M)
        if abs(lam[0]) > abs(lam[-1]):
            M, lam, V = -M, -lam[::-1], V[:, ::-1]
        u, norm = V[:, -1], lam[-1]
        rng = np.random.default_rng(5)
        for _ in range(50):
            X = space.from_coefficients(rng.standard_normal(space.rank))
            X /= np.linalg.norm(X)
            assert abs(u @ X @ u - np.sum(X * M) * norm) <= 1e-4

    def test_rejects_small_gamma(self):
        space = matrix_space_from_vectors(np.eye(2))
        with pytest.raises(ValueError):
            find_local_maximizer(space, 1.2)


class TestExtractDirection:
    def test_outer_product(self):
        a = np.array([0.0, -0.6, 0.8])
        assert np.allclose(extract_direction(np.outer(a, a)), a)

    def test_negative_outer_product(self):
        a = np.array([0.0, 0.6, -0.8])
        u = extract_direction(-np.outer(a, a))
        assert np.allclose(u, -a)
        assert np.abs(u).argmax() == 2 and u[2] > 0

    def test_degenerate_pair_is_logged(self, caplog):
        with caplog.at_level(logging.WARNING, logger="ridgeid.rank1"):
            u, gap = extract_direction(np.eye(2) / np.sqrt(2), return_gap=True)
        assert gap < 1e-10 and "gap" in caplog.text
        assert np.linalg.norm(u) == pytest.approx(1.0)

    @pytest.mark.parametrize("nu", [1e-3, 1e-2])
    def test_perturbed_space(self, nu):
        rng = np.random.default_rng(6)
        net = generate_network(8, 8, 0.2, seed=6)
        approx = perturb_subspace(matrix_space_from_vectors(net.weights), nu, rng)
        for seed in range(5):
            u = extract_direction(find_local_maximizer(approx, 2.0, 100, seed=seed).X)
            assert match_error(u, net.weights) <= 5 * nu


class TestCollect:
    def test_exact_orthonormal_twenty(self):
        Q = haar_orthogonal(np.random.default_rng(7), 20)
        ds = collect_directions(matrix_space_from_vectors(Q), n_rep=180, seed=1)
        assert ds.num_distinct == 20
        assert max(match_error(v, Q) for v in ds.vectors) <= 1e-6
        assert ds.multiplicities.sum() == 180
        assert np.all(np.diff(ds.multiplicities) <= 0)

    def test_single_repetition(self):
        ds = collect_directions(matrix_space_from_vectors(np.eye(3)), n_rep=1, seed=0)
        assert ds.num_distinct == 1

    def test_basis_invariance(self):
        net = generate_network(5, 5, 0.3, seed=8)
        space = matrix_space_from_vectors(net.weights)
        R = haar_orthogonal(np.random.default_rng(8), 5)
        rotated = MatrixSubspace(np.tensordot(R, space.basis, axes=1))
        a = collect_directions(space, n_rep=30, seed=3)
        b = collect_directions(rotated, n_rep=30, seed=3)
        np.testing.assert_allclose(a.vectors, b.vectors, atol=1e-8)
        assert np.array_equal(a.multiplicities, b.multiplicities)

    def test_kmeans_clustering(self):
        Q = haar_orthogonal(np.random.default_rng(9), 5)
        ds = collect_directions(matrix_space_from_vectors(Q), n_rep=40, seed=2, clustering="kmeans")
        assert ds.multiplicities.sum() == 40
        found = [v for v in ds.vectors if match_error(v, Q) <= 1e-6]
        assert len(found) >= 4

    @pytest.mark.slow
    def test_no_spurious_directions(self):
        for t in range(60):
            net = generate_network(20, 20, 1.0, seed=900 + t)
            ds = collect_directions(matrix_space_from_vectors(net.weights), seed=t)
            assert max(match_error(v, net.weights) for v in ds.vectors) <= 0.05


class TestClustering:
    def test_merges_sign_flips(self):
        a = np.array([0.6, 0.8])
        b = np.array([0.8, -0.6])
        raw = np.array([a, -a, a + 1e-3, b, -b])
        reps, counts = cluster_directions(raw, 0.05)
        assert list(counts) == [3, 2]
        assert np.allclose(reps[0], a, atol=1e-3) and np.allclose(np.abs(reps[1]), np.abs(b))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            cluster_directions(np.eye(2), method="dbscan")


class TestCouponCollector:
    def test_formula_value(self):
        assert coupon_collector_expectation(20) == pytest.approx(71.96, abs=0.01)

    def test_simulation(self):
        rng = np.random.default_rng(0)
        draws = []
        for _ in range(200):
            seen, n = set(), 0
            while len(seen) < 20:
                seen.add(int(rng.integers(20)))
                n += 1
            draws.append(n)
        assert abs(np.mean(draws) / coupon_collector_expectation(20) - 1) <= 0.2
