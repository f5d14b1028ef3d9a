"""Reference implementations used only by the tests.

None of these share code with the package: they go through cvxpy, dense
numpy linear algebra or plain enumeration.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.optimize as so


def dense(M):
    return M.toarray() if hasattr(M, "toarray") else np.asarray(M, dtype=float)


def qp_cvxpy(problem, tol=1e-10):
    """Solve a continuous LCQP with cvxpy/Clarabel; returns ``(x, objective)``."""
    import cvxpy as cp

    n = problem.n
    H = dense(problem.H)
    H = 0.5 * (H + H.T)
    x = cp.Variable(n)
    cons = []
    if problem.m_eq:
        cons.append(dense(problem.A_eq) @ x == problem.b_eq)
    if problem.m_ineq:
        cons.append(dense(problem.A_ineq) @ x <= problem.b_ineq)
    lo = np.isfinite(problem.lb)
    hi = np.isfinite(problem.ub)
    if lo.any():
        cons.append(x[np.flatnonzero(lo)] >= problem.lb[lo])
    if hi.any():
        cons.append(x[np.flatnonzero(hi)] <= problem.ub[hi])
    obj = 0.5 * cp.quad_form(x, cp.psd_wrap(H)) + problem.c @ x + problem.c0
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
    assert prob.status == cp.OPTIMAL, prob.status
    return np.asarray(x.value), float(prob.value)


def eq_qp_kkt(H, c, A, b):
    """``min 1/2 x'Hx + c'x  s.t. Ax = b`` by one dense KKT solve; returns ``(x, y)`` with ``Hx + c = A'y``."""
    H, A = dense(H), dense(A)
    n, m = H.shape[0], A.shape[0]
    K = np.block([[H, -A.T], [A, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.concatenate([-np.asarray(c, float), np.asarray(b, float)]))
    return sol[:n], sol[n:]


def brute_force_binary(Q, q, E=None, f=None, G=None, h=None, const=0.0, tol=1e-9):
    """Minimum of ``1/2 x'Qx + q'x`` (or ``x'Qx`` callers pre-scale) over {0,1}^n with constraints.

    Returns ``(best_value, best_x)``; ``best_x`` is the first optimum in
    lexicographic order.
    """
    Q = dense(Q)
    n = Q.shape[0]
    best, arg = math.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=n):
        x = np.array(bits)
        if E is not None and E.shape[0] and np.max(np.abs(dense(E) @ x - f)) > tol:
            continue
        if G is not None and G.shape[0] and np.max(dense(G) @ x - h) > tol:
            continue
        v = 0.5 * x @ Q @ x + np.asarray(q) @ x + const
        if v < best - 1e-12:
            best, arg = v, x
    return best, arg


def brute_force_problem(problem):
    """Exhaustive optimum of a pure binary :class:`Lcqp`."""
    return brute_force_binary(problem.H, problem.c, problem.A_eq, problem.b_eq,
                              problem.A_ineq, problem.b_ineq, const=problem.c0)


def cut_value(W, x):
    """Total weight of edges with endpoints on different sides (W symmetric, zero diagonal)."""
    W = np.asarray(W, float)
    n = W.shape[0]
    return sum(W[i, j] for i in range(n) for j in range(i + 1, n) if x[i] != x[j])


def brute_force_qap(F, D):
    """``min_perm sum_ij F_ij D_{perm(i) perm(j)}`` by enumerating permutations."""
    F, D = np.asarray(F, float), np.asarray(D, float)
    r = F.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(r)):
        v = sum(F[i, j] * D[perm[i], perm[j]] for i in range(r) for j in range(r))
        best = min(best, v)
    return best


def elastic_net_cd(X, y, lam, alpha, iters=20000, tol=1e-14):
    """Cyclic coordinate descent on ``||y - Xb||^2/(2n) + lam((1-alpha)/2 ||b||^2 + alpha ||b||_1)``."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, d = X.shape
    b = np.zeros(d)
    r = y.copy()
    col_sq = (X ** 2).sum(axis=0) / n
    for _ in range(iters):
        delta = 0.0
        for j in range(d):
            rho = X[:, j] @ r / n + col_sq[j] * b[j]
            new = np.sign(rho) * max(abs(rho) - lam * alpha, 0.0) / (col_sq[j] + lam * (1 - alpha))
            if new != b[j]:
                r -= X[:, j] * (new - b[j])
                delta = max(delta, abs(new - b[j]))
                b[j] = new
        if delta < tol:
            break
    return b


def elastic_net_value(X, y, b, lam, alpha):
    r = y - X @ b
    return r @ r / (2 * len(y)) + lam * (0.5 * (1 - alpha) * b @ b + alpha * np.abs(b).sum())


def scalar_argmin(fun, center, width):
    """Minimize a convex scalar function: coarse grid, then bounded Brent refinement."""
    grid = np.linspace(center - width, center + width, 2001)
    vals = np.array([fun(t) for t in grid])
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    res = so.minimize_scalar(fun, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    return float(res.x)


def svm_dual_cvxpy(K, y, C):
    """Exact C-SVC dual ``min 1/2 z'Qz - e'z, y'z = 0, 0 <= z <= C``."""
    import cvxpy as cp

    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    z = cp.Variable(n)
    prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(z, cp.psd_wrap(Q)) - cp.sum(z)),
                      [y @ z == 0, z >= 0, z <= C])
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(z.value)


def convex_scalar_root(dleft, dright, lo, hi, iters=200):
    """Minimizer of a convex scalar function from its one-sided derivatives.

    Bisection for the point where ``dleft(z) <= 0 <= dright(z)``; unlike
    value comparisons this resolves the argmin to rounding level.
    """
    if dright(lo) >= 0:
        return float(lo)
    if dleft(hi) <= 0:
        return float(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if dright(mid) < 0:
            lo = mid
        elif dleft(mid) > 0:
            hi = mid
        else:
            return float(mid)
    return float(0.5 * (lo + hi))


def qp_active_set(problem, act_tol=1e-7):
    """Conic solve, then an exact dense KKT solve on the identified active set.

    Inequality rows and bounds within ``act_tol`` of tight are treated as
    equalities; the KKT answer is returned when it is feasible and has
    multipliers of the right sign, otherwise the conic point.
    """
    x0, _ = qp_cvxpy(problem)
    n = problem.n
    rows, rhs, kind = [], [], []
    if problem.m_eq:
        rows.append(dense(problem.A_eq))
        rhs.append(problem.b_eq)
        kind += ["eq"] * problem.m_eq
    if problem.m_ineq:
        G = dense(problem.A_ineq)
        act = np.flatnonzero(problem.b_ineq - G @ x0 <= act_tol * (1 + np.abs(problem.b_ineq)))
        rows.append(G[act])
        rhs.append(problem.b_ineq[act])
        kind += ["le"] * act.size
    eye = np.eye(n)
    lo = np.flatnonzero(np.isfinite(problem.lb) & (x0 - problem.lb <= act_tol * (1 + np.abs(problem.lb))))
    hi = np.flatnonzero(np.isfinite(problem.ub) & (problem.ub - x0 <= act_tol * (1 + np.abs(problem.ub))))
    rows += [eye[lo], eye[hi]]
    rhs += [problem.lb[lo], problem.ub[hi]]
    kind += ["lb"] * lo.size + ["ub"] * hi.size
    A = np.vstack(rows) if rows else np.zeros((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    try:
        x, y = eq_qp_kkt(problem.H, problem.c, A, b)
    except np.linalg.LinAlgError:
        return x0
    # with Hx + c = A'y: y <= 0 on "<=" rows and upper bounds, y >= 0 on lower bounds
    kind = np.array(kind)
    sign_ok = np.all(y[(kind == "le") | (kind == "ub")] <= 1e-9) and np.all(y[kind == "lb"] >= -1e-9)
    feas = True
    if problem.m_ineq:
        feas &= bool(np.all(dense(problem.A_ineq) @ x - problem.b_ineq <= 1e-9))
    feas &= bool(np.all(x >= problem.lb - 1e-9) and np.all(x <= problem.ub + 1e-9))
    return x if (sign_ok and feas and np.max(np.abs(x - x0)) < 1e-4) else x0
