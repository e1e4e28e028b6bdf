import numpy as np
import pytest

from ridgeid.model import generate_network
from ridgeid.oracle import (
    BumpFamily,
    DensityError,
    DomainError,
    PullbackOracle,
    QueryOracle,
    gradient_fd,
    hessian_fd,
    hessian_fd_cost,
    hessians_fd,
    sample_ball,
    sample_sphere,
    weak_gradient,
    weak_hessian,
)


def quadratic(Q):
    return lambda X: 0.5 * np.einsum("ni,ij,nj->n", X, Q, X)


class TestQueryOracle:
    def test_counts_every_point(self):
        o = QueryOracle(lambda X: X.sum(axis=1), 3)
        o(np.zeros(3))
        o.query_batch(np.zeros((5, 3)))
        assert o.query_count == 6

    def test_noise_is_bounded_and_seeded(self):
        o1 = QueryOracle(lambda X: np.zeros(len(X)), 2, noise_bound=0.1, seed=4)
        o2 = QueryOracle(lambda X: np.zeros(len(X)), 2, noise_bound=0.1, seed=4)
        v1, v2 = o1.query_batch(np.zeros((1000, 2))), o2.query_batch(np.zeros((1000, 2)))
        assert np.abs(v1).max() <= 0.1 and np.abs(v1).max() > 0.09
        assert np.array_equal(v1, v2)

    def test_domain_violation(self):
        o = QueryOracle(lambda X: X[:, 0], 2)
        with pytest.raises(DomainError):
            o(np.array([1.2, 0.0]))
        assert o.query_count == 0

    def test_pullback_counts_on_parent(self):
        parent = QueryOracle(lambda X: X[:, 0] + 2 * X[:, 1], 3)
        B = np.eye(3)[:, :2]
        child = PullbackOracle(parent, B)
        assert child(np.array([0.5, 0.25])) == pytest.approx(1.0)
        assert parent.query_count == 1 and child.query_count == 1
        assert child.root() is parent


class TestFiniteDifferences:
    def test_gradient_cost_and_accuracy(self):
        a = np.array([0.6, 0.8, 0.0])
        o = QueryOracle(lambda X: np.tanh(X @ a), 3)
        x = np.array([0.2, -0.1, 0.3])
        g = gradient_fd(o, x, 1e-6)
        assert o.query_count == 4
        np.testing.assert_allclose(g, (1 - np.tanh(a @ x) ** 2) * a, atol=1e-5)

    def test_gradient_of_linear_is_exact(self):
        c = np.array([1.0, -2.0, 0.5])
        g = gradient_fd(QueryOracle(lambda X: X @ c, 3), np.zeros(3), 1e-3)
        np.testing.assert_allclose(g, c, atol=1e-12)

    def test_hessian_of_quadratic_is_exact(self):
        rng = np.random.default_rng(0)
        Q = rng.standard_normal((4, 4))
        Q = Q + Q.T
        o = QueryOracle(quadratic(Q), 4)
        H = hessian_fd(o, np.array([0.1, 0.2, -0.3, 0.0]), 1e-3)
        np.testing.assert_allclose(H, Q, atol=1e-9)
        assert o.query_count == hessian_fd_cost(4) == 15

    def test_hessian_is_symmetric(self):
        net = generate_network(5, 5, 0.5, seed=1)
        H = hessian_fd(QueryOracle(net.eval, 5), sample_sphere(np.random.default_rng(0), 1, 5)[0], 1e-3)
        assert np.array_equal(H, H.T)

    def test_batch_matches_single(self):
        net = generate_network(4, 4, 0.3, seed=2)
        X = sample_sphere(np.random.default_rng(1), 3, 4)
        o = QueryOracle(net.eval, 4)
        Hb = hessians_fd(o, X, 1e-3)
        for x, H in zip(X, Hb):
            np.testing.assert_array_equal(H, hessian_fd(o, x, 1e-3))

    @pytest.mark.parametrize("m,h", [(5, 1e-2), (5, 1e-3), (20, 1e-3)])
    def test_error_bound(self, m, h):
        rng = np.random.default_rng(m)
        for k in range(5):
            net = generate_network(m, m, 0.5, seed=100 * m + k)
            C3 = net.derivative_bounds()[3]
            x = sample_sphere(rng, 1, m)[0]
            H = hessian_fd(QueryOracle(net.eval, m), x, h)
            assert np.linalg.norm(H - net.hess(x)) <= 2 * C3 * m * h

    def test_error_is_first_order_in_h(self):
        net = generate_network(5, 5, 0.5, seed=3)
        x = sample_sphere(np.random.default_rng(3), 1, 5)[0]
        errs = [np.linalg.norm(hessian_fd(QueryOracle(net.eval, 5), x, h) - net.hess(x)) for h in (1e-2, 5e-3)]
        assert 1.6 < errs[0] / errs[1] < 2.4


class TestWeakDerivatives:
    def test_bump_derivatives(self):
        fam = BumpFamily(3, 0.5)
        nu = np.array([0.1, 0.0, -0.1])
        x = nu + np.array([0.1, 0.2, -0.05])
        h = 1e-6
        g = np.array([(fam.phi(nu, x + h * e) - fam.phi(nu, x - h * e))[0] / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(fam.grad(nu, x)[0], g, rtol=1e-6)
        Hfd = np.array([(fam.grad(nu, x + h * e) - fam.grad(nu, x - h * e))[0] / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(fam.hess(nu, x)[0], Hfd, rtol=1e-5, atol=1e-9)

    def test_support_inside_ball(self):
        fam = BumpFamily(4)
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert np.linalg.norm(fam.sample_nu(rng)) + fam.radius <= 1.0

    def test_weak_gradient_of_linear_function(self):
        # integration by parts: -int f grad(phi) = int grad(f) phi = c * int phi
        d = 2
        c = np.array([1.0, -0.5])
        fam = BumpFamily(d, 0.4)
        nu = np.zeros(d)
        rng = np.random.default_rng(0)
        X = fam.sample_points(rng, 400_000)
        est = weak_gradient(QueryOracle(lambda Y: Y @ c, d, domain_radius=1.0), fam, nu, X)
        mass = np.mean(fam.phi(nu, X) / fam.density(X))
        np.testing.assert_allclose(est, c * mass, rtol=0.02)

    def test_weak_hessian_of_quadratic(self):
        d = 2
        Q = np.array([[2.0, 0.5], [0.5, -1.0]])
        fam = BumpFamily(d, 0.4)
        nu = np.array([0.1, 0.1])
        X = fam.sample_points(np.random.default_rng(1), 2_000_000)
        est = weak_hessian(QueryOracle(quadratic(Q), d, domain_radius=1.0), fam, nu, X)
        mass = np.mean(fam.phi(nu, X) / fam.density(X))
        np.testing.assert_allclose(est, Q * mass, atol=0.02 * np.abs(Q).max() * mass)

    def test_estimator_rms_scales_like_inverse_sqrt(self):
        d = 2
        c = np.array([1.0, 0.0])
        fam = BumpFamily(d, 0.4)
        nu = np.zeros(d)
        o = QueryOracle(lambda Y: Y @ c, d, domain_radius=1.0)
        truth = c * fam.volume * np.mean(fam.phi(nu, fam.sample_points(np.random.default_rng(9), 2_000_000)))
        rms = []
        for N in (1_000, 16_000):
            rng = np.random.default_rng(N)
            errs = [weak_gradient(o, fam, nu, fam.sample_points(rng, N)) - truth for _ in range(50)]
            rms.append(np.sqrt(np.mean(np.sum(np.square(errs), axis=1))))
        slope = np.log(rms[1] / rms[0]) / np.log(16)
        assert -0.6 <= slope <= -0.4

    def test_vanishing_density_raises(self):
        fam = BumpFamily(2)
        with pytest.raises(DensityError):
            weak_gradient(QueryOracle(lambda Y: Y[:, 0], 2), fam, np.zeros(2), np.array([[1.02, 0.0]]))

    def test_gradient_bound_dominates_samples(self):
        fam = BumpFamily(3, 0.3)
        nu = np.zeros(3)
        X = nu + sample_ball(np.random.default_rng(0), 20_000, 3, 0.3)
        ratio = np.linalg.norm(fam.grad(nu, X), axis=1) / fam.density(X)
        assert ratio.max() <= fam.gradient_bound * (1 + 1e-9)


def test_sphere_and_ball_samples():
    rng = np.random.default_rng(0)
    S = sample_sphere(rng, 100, 5)
    np.testing.assert_allclose(np.linalg.norm(S, axis=1), 1.0)
    B = sample_ball(rng, 20_000, 3)
    r = np.linalg.norm(B, axis=1)
    assert r.max() <= 1.0
    # radius of a uniform point in the 3-ball has mean 3/4
    assert abs(r.mean() - 0.75) < 0.01
