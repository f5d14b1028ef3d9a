import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from racadmm import linalg
from racadmm.linalg import (NotPositiveDefiniteError, cholesky, eigenvalues, factor_diagonal_kkt,
                            kkt_factor_general, kkt_solve_diagonal, solve_chol)


def spd(rng, n, shift=1.0):
    B = rng.normal(size=(n, n))
    return B @ B.T + shift * np.eye(n)


class TestCholesky:
    def test_identity(self):
        f = cholesky(np.eye(3))
        np.testing.assert_array_equal(f.L, np.eye(3))

    def test_diagonal(self):
        f = cholesky(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(f.L, np.diag([2.0, 3.0]))

    def test_indefinite_rejected(self):
        # eigenvalues 3 and -1
        with pytest.raises(NotPositiveDefiniteError):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        M = spd(rng, 8)
        L = cholesky(M).L
        assert np.linalg.norm(L @ L.T - M) / np.linalg.norm(M) < 1e-10

    def test_sparse_path_large(self):
        n = linalg.DENSE_BLOCK_LIMIT + 20
        M = sp.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(n, n), format="csc")
        f = cholesky(M)
        assert f.is_sparse
        x = np.arange(n, dtype=float)
        np.testing.assert_allclose(solve_chol(f, M @ x), x, atol=1e-9)

    def test_sparse_indefinite_rejected(self):
        n = linalg.DENSE_BLOCK_LIMIT + 5
        M = sp.diags([2.0, 1.0, 2.0], [-1, 0, 1], shape=(n, n), format="csc")
        with pytest.raises(NotPositiveDefiniteError):
            cholesky(M)


class TestSolveChol:
    def test_identity(self):
        np.testing.assert_allclose(solve_chol(cholesky(np.eye(2)), [3.0, -1.0]), [3.0, -1.0])

    def test_diagonal(self):
        np.testing.assert_allclose(solve_chol(cholesky(np.diag([4.0, 9.0])), [8.0, 18.0]), [2.0, 2.0])

    def test_known_solution(self):
        rng = np.random.default_rng(1)
        M = spd(rng, 5)
        x = rng.normal(size=5)
        rhs = M @ x
        got = solve_chol(cholesky(M), rhs)
        assert np.max(np.abs(M @ got - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))
        np.testing.assert_allclose(got, x, atol=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve_chol(cholesky(np.eye(2)), np.ones(3))


class TestKkt:
    def test_small_bordered_system(self):
        # dense oracle: [[2I, A'], [A, -1]] [x; mu] = (3, 3, 0)
        H = np.eye(2)
        A = np.array([[1.0, 1.0]])
        f = kkt_factor_general(H, A, 1.0)
        sol = f.solve(np.array([3.0, 3.0, 0.0]))
        K = np.array([[2.0, 0.0, 1.0], [0.0, 2.0, 1.0], [1.0, 1.0, -1.0]])
        np.testing.assert_allclose(sol, np.linalg.solve(K, [3.0, 3.0, 0.0]))
        np.testing.assert_allclose(sol, [0.75, 0.75, 1.5])

    def test_empty_border_is_cholesky(self):
        rng = np.random.default_rng(2)
        H = spd(rng, 4)
        f = kkt_factor_general(H, None, 2.0)
        q = rng.normal(size=4)
        np.testing.assert_allclose(f.solve_x(q), np.linalg.solve(H + 2 * np.eye(4), -q))

    def test_repeated_solves(self):
        rng = np.random.default_rng(3)
        H = spd(rng, 6)
        A = rng.normal(size=(3, 6))
        f = kkt_factor_general(H, A, 1.5)
        K = np.block([[H + 1.5 * np.eye(6), np.sqrt(1.5) * A.T], [np.sqrt(1.5) * A, -np.eye(3)]])
        for _ in range(5):
            rhs = rng.normal(size=9)
            sol = f.solve(rhs)
            assert np.linalg.norm(K @ sol - rhs) <= 1e-9 * np.linalg.norm(rhs)

    def test_sparse_inputs(self):
        rng = np.random.default_rng(4)
        H = sp.random(30, 30, density=0.1, random_state=4)
        H = sp.csr_matrix(H @ H.T + sp.identity(30))
        A = sp.random(5, 30, density=0.3, random_state=5, format="csr")
        q = rng.normal(size=30)
        x = kkt_factor_general(H, A, 1.0).solve_x(q)
        M = H.toarray() + np.eye(30) + A.toarray().T @ A.toarray()
        np.testing.assert_allclose(M @ x, -q, atol=1e-9)

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            kkt_factor_general(np.eye(2), None, 0.0)

    def test_diagonal_without_rows(self):
        d = np.array([1.0, 3.0])
        q = np.array([2.0, -4.0])
        np.testing.assert_allclose(kkt_solve_diagonal(d, None, 1.0, -q), -q / (d + 1.0))

    def test_diagonal_zero_hessian_one_row(self):
        # (0 + 1 + 1) x = 1 -> x = 0.5
        x = kkt_solve_diagonal(np.zeros(1), np.array([[1.0]]), 1.0, np.array([1.0]))
        np.testing.assert_allclose(x, np.linalg.solve([[2.0]], [1.0]))
        np.testing.assert_allclose(x, [0.5])

    def test_diagonal_rejects_nonzero_lower_rhs(self):
        with pytest.raises(ValueError):
            kkt_solve_diagonal(np.ones(2), np.ones((1, 2)), 1.0, np.array([1.0, 1.0, 1.0]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 50), m=st.integers(0, 10),
       beta=st.floats(0.1, 10.0))
def test_diagonal_matches_general(seed, n, m, beta):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.0, 5.0, size=n)
    A = rng.normal(size=(m, n))
    q = rng.normal(size=n)
    x_gen = kkt_factor_general(np.diag(d), A if m else None, beta).solve_x(q)
    x_diag = factor_diagonal_kkt(d, A if m else None, beta).solve_x(q)
    assert np.max(np.abs(x_gen - x_diag)) <= 1e-9 * (1 + np.max(np.abs(x_gen)))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 50))
def test_factor_solve_roundtrip(seed, n):
    rng = np.random.default_rng(seed)
    M = spd(rng, n)
    rhs = rng.normal(size=n)
    x = solve_chol(cholesky(M), rhs)
    assert np.max(np.abs(M @ x - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))


class TestEigenvalues:
    def test_diagonal(self):
        r = eigenvalues(np.diag([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(np.sort(r.values), [1.0, 2.0, 3.0])
        assert r.spectral_radius == pytest.approx(3.0)

    def test_rotation(self):
        r = eigenvalues(np.array([[0.0, -1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(sorted(r.values, key=lambda v: v.imag), [-1j, 1j], atol=1e-14)
        assert r.spectral_radius == pytest.approx(1.0)

    def test_companion_golden_ratio(self):
        # x^2 - x - 1
        r = eigenvalues(np.array([[1.0, 1.0], [1.0, 0.0]]), symmetric=False)
        roots = np.sort(np.roots([1.0, -1.0, -1.0]))
        np.testing.assert_allclose(np.sort(np.real(r.values)), roots)
        assert r.spectral_radius == pytest.approx((1 + 5 ** 0.5) / 2)

    def test_radius_is_max_modulus(self):
        rng = np.random.default_rng(7)
        M = rng.normal(size=(6, 6))
        r = eigenvalues(M)
        assert r.spectral_radius == pytest.approx(np.max(np.abs(np.linalg.eigvals(M))))

    def test_non_square(self):
        with pytest.raises(ValueError):
            eigenvalues(np.ones((2, 3)))
