import numpy as np
from hypothesis import given, settings, strategies as st

from oracles import qp_cvxpy
from racadmm.ipm import solve_eq_qp, solve_qp
from racadmm.problem import Lcqp


def test_equality_only_matches_kkt():
    Q = np.diag([2.0, 2.0])
    q = np.array([-2.0, -2.0])
    r = solve_eq_qp(Q, q, np.array([[1.0, 1.0]]), np.array([0.0]))
    np.testing.assert_allclose(r.x, [0.0, 0.0], atol=1e-14)
    # stationarity with the package sign convention Qx + q + E'nu = 0
    np.testing.assert_allclose(Q @ r.x + q + r.nu[0] * np.ones(2), 0.0, atol=1e-14)


def test_box_clamps():
    # both bounds strictly active (nonzero multipliers)
    r = solve_qp(np.eye(2), np.array([-3.0, 2.0]), G=np.vstack([np.eye(2), -np.eye(2)]),
                 h=np.array([1.0, 1.0, 1.0, 1.0]))
    np.testing.assert_allclose(r.x, [1.0, -1.0], atol=1e-8)
    np.testing.assert_allclose(r.lam, [2.0, 0.0, 0.0, 1.0], atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 12), me=st.integers(0, 3), mi=st.integers(1, 8))
def test_matches_conic_solver(seed, n, me, mi):
    me = min(me, n - 1) if n > 1 else 0
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    Q = B @ B.T + 0.1 * np.eye(n)
    q = rng.normal(size=n)
    E = rng.normal(size=(me, n))
    G = rng.normal(size=(mi, n))
    x0 = rng.normal(size=n)
    f = E @ x0
    h = G @ x0 + rng.random(mi)
    r = solve_qp(Q, q, E, f, G, h)
    assert r.status == "optimal"
    x_ref, _ = qp_cvxpy(Lcqp.create(H=Q, c=q, A_eq=E, b_eq=f, A_ineq=G, b_ineq=h))
    assert np.max(np.abs(r.x - x_ref)) <= 1e-6 * (1 + np.max(np.abs(x_ref)))
    assert np.all(r.lam >= -1e-10)
    resid = Q @ r.x + q + E.T @ r.nu + G.T @ r.lam
    assert np.max(np.abs(resid)) <= 1e-7 * (1 + np.max(np.abs(q)))
