import numpy as np
import pytest

from ridgeid.model import RidgeNetwork, generate_network, haar_orthogonal, near_orthonormality
from ridgeid.oracle import QueryOracle
from ridgeid.reconstruct import (
    ExtrapolationError,
    assemble,
    dual_basis,
    reconstruct,
    reconstruction_cost,
    tabulate_profiles,
    uniform_error,
)


def orthonormal_net(m, seed):
    rng = np.random.default_rng(seed)
    return RidgeNetwork(haar_orthogonal(rng, m), rng.normal(1, 0.2, m), rng.normal(0, 0.2, m))


class TestDualBasis:
    def test_orthonormal_is_self_dual(self):
        Q = haar_orthogonal(np.random.default_rng(0), 5)
        np.testing.assert_allclose(dual_basis(Q), Q, atol=1e-12)

    def test_two_dimensional_example(self):
        c = np.sqrt(0.5)
        B = dual_basis(np.array([[1.0, c], [0.0, c]]))
        np.testing.assert_allclose(B[:, 0], [1.0, -1.0], atol=1e-12)
        np.testing.assert_allclose(B[:, 1], [0.0, np.sqrt(2.0)], atol=1e-12)

    def test_biorthogonality_and_norm_bound(self):
        for seed in range(5):
            A = generate_network(8, 8, 0.5, seed=seed).weights
            B = dual_basis(A)
            np.testing.assert_allclose(A.T @ B, np.eye(8), atol=1e-8)
            assert np.linalg.norm(B, axis=0).max() <= 2.0

    def test_dependent_directions(self):
        with pytest.raises(np.linalg.LinAlgError):
            dual_basis(np.array([[1.0, 1.0], [0.0, 1e-10]]))


class TestProfiles:
    def test_exact_tables_match_closed_form(self):
        net = orthonormal_net(4, 1)
        tables = tabulate_profiles(QueryOracle(net.eval, 4), dual_basis(net.weights), 64)
        for j, tab in enumerate(tables):
            b, th = net.scales[j], net.offsets[j]
            np.testing.assert_allclose(tab.values, b * (np.tanh(tab.grid + th) - np.tanh(th)), atol=1e-12)
            assert tab.index == j
            assert tab.half_width == pytest.approx(1 - 1e-9, abs=1e-15)
            np.testing.assert_allclose(tab(tab.grid), tab.values, atol=1e-14)

    def test_zero_network(self):
        o = QueryOracle(lambda X: np.zeros(len(X)), 3)
        tables = tabulate_profiles(o, np.eye(3), 32)
        assert all(np.all(t.values == 0) for t in tables)
        assert assemble(np.eye(3), tables)(np.array([0.1, 0.2, 0.3])) == 0.0

    def test_fourth_order_convergence(self):
        net = orthonormal_net(3, 2)
        o = QueryOracle(net.eval, 3)
        errs = []
        for n in (64, 128):
            tab = tabulate_profiles(o, net.weights, n)[0]
            mid = 0.5 * (tab.grid[1:] + tab.grid[:-1])
            exact = net.scales[0] * (np.tanh(mid + net.offsets[0]) - np.tanh(net.offsets[0]))
            errs.append(np.abs(tab(mid) - exact).max())
        assert 8 <= errs[0] / errs[1] <= 24

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            tabulate_profiles(QueryOracle(lambda X: X[:, 0], 2), np.eye(2), 8)

    def test_extrapolation_is_an_error_unless_enabled(self):
        tab = tabulate_profiles(QueryOracle(lambda X: X[:, 0], 2), 2 * np.eye(2), 32)[0]
        with pytest.raises(ExtrapolationError):
            tab(0.6)
        assert tab(0.6, extrapolate=True) == pytest.approx(1.2)


class TestReconstruct:
    def test_query_cost(self):
        net = generate_network(5, 5, 0.3, seed=0)
        o = QueryOracle(net.eval, 5)
        reconstruct(o, net.weights, n_grid=100, extrapolate=True)
        assert o.query_count == reconstruction_cost(5, 100) == 501

    def test_exact_directions(self):
        for seed in range(3):
            net = orthonormal_net(6, seed)
            f_hat = reconstruct(QueryOracle(net.eval, 6), net.weights, n_grid=512)
            sup, mse = uniform_error(net.eval, f_hat, 100_000, seed=seed)
            assert sup <= 1e-6 and mse <= sup**2

    def test_permutation_and_sign_invariance(self):
        net = generate_network(4, 4, 0.3, seed=3)
        o = QueryOracle(net.eval, 4)
        base = reconstruct(o, net.weights, extrapolate=True)
        perm = [2, 0, 3, 1]
        flipped = net.weights[:, perm] * np.array([1.0, -1.0, -1.0, 1.0])
        other = reconstruct(o, flipped, extrapolate=True)
        X = np.random.default_rng(3).standard_normal((200, 4)) * 0.3
        np.testing.assert_allclose(base(X), other(X), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_perturbed_directions(self, seed):
        # explicit constant chain of the sup-norm estimate, with beta = max ||b_j||
        net = generate_network(5, 5, 0.2, seed=seed)
        A = net.weights
        E = np.random.default_rng(seed).standard_normal(A.shape)
        Ah = A + 0.01 * E / np.linalg.norm(E)
        Ah /= np.linalg.norm(Ah, axis=0)
        eta = np.linalg.norm(Ah - A)
        f_hat = reconstruct(QueryOracle(net.eval, 5), Ah, n_grid=512, extrapolate=True)
        sup, _ = uniform_error(net.eval, f_hat, 100_000, seed=seed)
        C2 = net.derivative_bounds()[2]
        eps, eps_hat = near_orthonormality(A).s_value, near_orthonormality(Ah).s_value
        beta = np.linalg.norm(dual_basis(Ah), axis=0).max()
        chain = C2 * ((1 + eps) * eta * (1 + beta) + eta**2 * (1 + beta**2) + beta**2 * (1 + eps_hat) ** 2 * eta**2)
        assert sup <= chain
        assert sup <= 5 * C2 * 2 * max(eta, eta**2)

    def test_offset_restores_value_at_origin(self):
        o = QueryOracle(lambda X: 3.0 + X[:, 0] - 2 * X[:, 1], 2)
        f_hat = reconstruct(o, np.eye(2), n_grid=32)
        assert f_hat(np.zeros(2)) == pytest.approx(3.0)
        assert f_hat(np.array([0.5, 0.25])) == pytest.approx(3.0, abs=1e-12)
