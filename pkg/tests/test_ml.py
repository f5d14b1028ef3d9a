import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import convex_scalar_root, elastic_net_cd, elastic_net_value, scalar_argmin, svm_dual_cvxpy
from racadmm.generators import GaussianKernel, SvmSpec
from racadmm.ml import (ElasticNetOptions, SvmModel, accuracy, decision_function, default_gamma,
                        elastic_net_objective, fit_elastic_net, predict, soft_threshold, svm_options, train_csvc,
                        update_z)


def z_subproblem(xi, beta, gamma, lam, alpha):
    """Scalar z objective written out independently of the closed form."""
    return lambda z: (xi - gamma * beta) * z + 0.5 * (gamma + (1 - alpha) * lam) * z * z + lam * alpha * abs(z)


def z_subproblem_slopes(xi, beta, gamma, lam, alpha):
    """One-sided derivatives of :func:`z_subproblem`; the l1 term has slope -/+ lam alpha at 0."""
    lin, quad, l1 = xi - gamma * beta, gamma + (1 - alpha) * lam, lam * alpha

    def left(z):
        return lin + quad * z + (l1 if z > 0 else -l1)

    def right(z):
        return lin + quad * z + (l1 if z >= 0 else -l1)
    return left, right


def tight(n):
    return svm_options(n, eps=1e-10, eps_dual=1e-10, max_iter=20000)


def blobs(n_per=100, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal([2.0, 2.0], 0.7, size=(n_per, 2)), rng.normal([-2.0, -2.0], 0.7, size=(n_per, 2))])
    return X, np.r_[np.ones(n_per), -np.ones(n_per)]


def regression(seed, n=20, d=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = X @ rng.normal(size=d) + 0.1 * rng.normal(size=n)
    return X, y


class TestSoftThreshold:
    def test_cases(self):
        assert soft_threshold(2.0, 1.0) == -1.0
        assert soft_threshold(-2.0, 1.0) == 1.0
        assert soft_threshold(1.0, 2.0) == 0.0

    def test_vectorized(self):
        np.testing.assert_array_equal(soft_threshold(np.array([3.0, -0.5, -4.0]), 1.0), [-2.0, 0.0, 3.0])

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(1.0, -1.0)


class TestUpdateZ:
    def test_zero_numerator(self):
        np.testing.assert_array_equal(update_z(np.array([1.0, -2.0]), np.array([0.5, -1.0]), 0.5, 1.0, 0.3), 0.0)

    def test_ridge_case(self):
        beta, xi, g, lam = np.array([1.0, 2.0]), np.array([0.3, -0.1]), 0.7, 2.0
        np.testing.assert_allclose(update_z(beta, xi, g, lam, 0.0), (g * beta - xi) / (lam + g))

    def test_bad_denominator(self):
        with pytest.raises(ValueError):
            update_z(np.ones(1), np.ones(1), 0.0, 1.0, 1.0)


def test_update_z_matches_scalar_minimization():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        xi, beta = rng.normal(scale=3.0, size=2)
        gamma = rng.uniform(0.01, 5.0)
        lam = rng.uniform(0.0, 5.0)
        alpha = rng.uniform(0.0, 1.0)
        z = float(update_z(np.array([beta]), np.array([xi]), gamma, lam, alpha)[0])
        ref = convex_scalar_root(*z_subproblem_slopes(xi, beta, gamma, lam, alpha), -1e3, 1e3)
        worst = max(worst, abs(z - ref))
    assert worst <= 1e-8


def test_update_z_matches_value_search():
    # a value-only search resolves the argmin to about sqrt(machine eps) relative
    rng = np.random.default_rng(7)
    for _ in range(200):
        xi, beta = rng.normal(scale=3.0, size=2)
        gamma, lam, alpha = rng.uniform(0.01, 5.0), rng.uniform(0.0, 5.0), rng.uniform(0.0, 1.0)
        z = float(update_z(np.array([beta]), np.array([xi]), gamma, lam, alpha)[0])
        ref = scalar_argmin(z_subproblem(xi, beta, gamma, lam, alpha), center=0.0, width=50.0)
        assert abs(z - ref) <= 1e-6 * (1 + abs(ref))


@settings(max_examples=100, deadline=None)
@given(xi=st.floats(-10, 10), beta=st.floats(-10, 10), gamma=st.floats(0.01, 10), lam=st.floats(0, 10),
       alpha=st.floats(0, 1))
def test_update_z_is_a_minimizer(xi, beta, gamma, lam, alpha):
    f = z_subproblem(xi, beta, gamma, lam, alpha)
    z = float(update_z(np.array([beta]), np.array([xi]), gamma, lam, alpha)[0])
    for h in (1e-3, 1e-1, 1.0):
        assert f(z) <= f(z + h) + 1e-12 and f(z) <= f(z - h) + 1e-12


class TestElasticNet:
    def test_least_squares(self):
        st_ = fit_elastic_net(np.eye(2), np.array([1.0, 0.0]), 0.0, 0.5, ElasticNetOptions(tol=1e-12))
        np.testing.assert_allclose(st_.coef, [1.0, 0.0], atol=1e-9)

    def test_full_shrinkage(self):
        X, y = regression(0)
        st_ = fit_elastic_net(X, y, 1e4, 1.0)
        np.testing.assert_array_equal(st_.coef, 0.0)

    def test_matches_coordinate_descent(self):
        X, y = regression(11)
        lam, alpha = 0.1, 0.5
        st_ = fit_elastic_net(X, y, lam, alpha, ElasticNetOptions(block_size=2, max_iter=5000, tol=1e-10))
        ref = elastic_net_cd(X, y, lam, alpha)
        f, f_ref = elastic_net_objective(X, y, st_.coef, lam, alpha), elastic_net_value(X, y, ref, lam, alpha)
        assert abs(f - f_ref) <= 1e-3
        assert np.max(np.abs(st_.coef - ref)) < 1e-4

    @pytest.mark.parametrize("mode", ["rac", "rp", "cyclic"])
    def test_modes_agree(self, mode):
        X, y = regression(3, n=40, d=9)
        ref = elastic_net_cd(X, y, 0.05, 0.7)
        st_ = fit_elastic_net(X, y, 0.05, 0.7, ElasticNetOptions(block_size=3, mode=mode, max_iter=5000,
                                                                 tol=1e-10))
        assert np.max(np.abs(st_.coef - ref)) < 1e-5

    def test_sparse_input(self):
        import scipy.sparse as sp
        X, y = regression(4)
        a = fit_elastic_net(X, y, 0.1, 0.5, ElasticNetOptions(block_size=2))
        b = fit_elastic_net(sp.csr_matrix(X), y, 0.1, 0.5, ElasticNetOptions(block_size=2))
        np.testing.assert_allclose(a.coef, b.coef)

    def test_default_gamma(self):
        assert default_gamma(np.ones((4, 4)), 2.0) == pytest.approx(0.2)
        X = np.zeros((100, 100))
        X[0, 0] = 1.0
        assert default_gamma(X, 2.0) == 2.0
        assert default_gamma(np.ones((2, 2)), 0.0) == 1.0

    def test_validation(self):
        X, y = regression(0)
        with pytest.raises(ValueError):
            fit_elastic_net(X, y, 0.1, 1.5)
        with pytest.raises(ValueError):
            fit_elastic_net(X, y, -0.1, 0.5)
        with pytest.raises(ValueError):
            fit_elastic_net(X, y[:-1], 0.1, 0.5)
        with pytest.raises(ValueError):
            ElasticNetOptions(mode="distributed")


# The iterate objective is not a Lyapunov function of this splitting: these
# seeds show small increases (1e-9 to 4e-5) between consecutive iterations.
NON_MONOTONE_SEEDS = {1, 5, 7, 9}


@pytest.mark.parametrize("seed", [
    pytest.param(s, marks=pytest.mark.xfail(strict=True, reason="objective rises between iterations"))
    if s in NON_MONOTONE_SEEDS else s for s in range(10)])
def test_objective_non_increasing_with_fixed_blocks(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 8))
    y = X @ rng.normal(size=8) + 0.1 * rng.normal(size=30)
    st_ = fit_elastic_net(X, y, 0.1, 0.5, ElasticNetOptions(block_size=2, mode="rp", max_iter=300, seed=seed))
    assert np.max(np.diff(st_.history)) <= 1e-10


class TestSvm:
    def test_two_point_model(self):
        spec = SvmSpec([[-1.0], [1.0]], [-1.0, 1.0], C=1.0, sigma=1.0)
        m = train_csvc(spec)
        assert m.coef[0] == pytest.approx(m.coef[1], rel=1e-12) and abs(m.b) <= 1e-12
        assert accuracy(m, spec.X, spec.y) == 100.0

    def test_two_point_analytic(self):
        # z1 = z2 = t minimizes t^2 (1 - k) - 2t with k = exp(-2): t = 1 / (1 - k) below C
        m = train_csvc(SvmSpec([[-1.0], [1.0]], [-1.0, 1.0], C=10.0), tight(2))
        np.testing.assert_allclose(m.coef, 1 / (1 - math.exp(-2.0)), rtol=1e-9)
        m = train_csvc(SvmSpec([[-1.0], [1.0]], [-1.0, 1.0], C=1.0), tight(2))
        np.testing.assert_allclose(m.coef, [1.0, 1.0])

    def test_matches_dual_oracle(self):
        X, y = blobs(15, seed=2)
        X[0] = [-1.5, -1.5]
        spec = SvmSpec(X, y, C=2.0, sigma=1.5)
        m = train_csvc(spec, tight(30))
        z = np.zeros(30)
        z[m.support] = m.coef
        K = GaussianKernel(1.5)(X, X)
        ref = svm_dual_cvxpy(K, y, 2.0)
        assert np.max(np.abs(z - ref)) < 1e-5
        assert np.all((z >= 0) & (z <= 2.0)) and abs(y @ z) < 1e-8

    def test_duplicated_data(self):
        a = train_csvc(SvmSpec([[-1.0], [1.0]], [-1.0, 1.0], C=10.0), tight(2))
        b = train_csvc(SvmSpec([[-1.0], [1.0], [-1.0], [1.0]], [-1.0, 1.0, -1.0, 1.0], C=10.0), tight(4))
        grid = np.linspace(-3, 3, 13)[:, None]
        np.testing.assert_allclose(decision_function(a, grid), decision_function(b, grid), atol=1e-8)
        assert b.coef.sum() == pytest.approx(a.coef.sum())

    def test_single_class(self):
        m = train_csvc(SvmSpec([[-1.0], [1.0], [0.5]], [1.0, 1.0, 1.0]))
        assert np.all(predict(m, [[7.0], [-3.0], [0.0]]) == 1.0)
        m = train_csvc(SvmSpec([[-1.0], [1.0], [0.5]], [-1.0, -1.0, -1.0]))
        assert np.all(predict(m, [[7.0], [-3.0], [0.0]]) == -1.0)

    def test_midpoint_tie(self):
        m = train_csvc(SvmSpec([[-1.0], [1.0]], [-1.0, 1.0]))
        assert predict(m, [[0.0]]).tolist() == [1.0]
        assert predict(m, [[-1.0], [1.0]]).tolist() == [-1.0, 1.0]

    def test_far_point(self):
        m = train_csvc(SvmSpec([[-1.0], [1.0]], [-1.0, 1.0]))
        # K(x, 1) dominates K(x, -1) for x > 0 however far
        assert predict(m, [[4.0], [-4.0]]).tolist() == [1.0, -1.0]

    def test_separable_set(self):
        X, y = blobs()
        m = train_csvc(SvmSpec(X, y))
        assert m.meta["iterations"] <= 10
        assert accuracy(m, X, y) >= 95.0

    def test_accuracy_counts(self):
        m = SvmModel(support=np.zeros(0, dtype=np.intp), coef=np.zeros(0), X_support=np.zeros((0, 1)),
                     y_support=np.zeros(0), b=1.0, sigma=1.0, C=1.0)
        X = np.zeros((10, 1))
        assert accuracy(m, X, np.ones(10)) == 100.0
        assert accuracy(m, X, np.r_[np.ones(5), -np.ones(5)]) == 50.0
        assert accuracy(m, X, np.r_[np.ones(7), -np.ones(3)]) == 70.0
        with pytest.raises(ValueError):
            accuracy(m, X[:0], np.zeros(0))

    def test_json_roundtrip(self):
        X, y = blobs(10)
        m = train_csvc(SvmSpec(X, y))
        back = SvmModel.from_json(m.to_json())
        np.testing.assert_array_equal(decision_function(m, X), decision_function(back, X))
        assert back.meta == m.meta

    def test_point_cap(self):
        with pytest.raises(ValueError):
            train_csvc(SvmSpec(np.zeros((5001, 1)), np.ones(5001)))
