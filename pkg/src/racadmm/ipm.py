"""Small dense primal-dual interior point method for convex QP sub-problems.

Solves::

    min 1/2 x^T Q x + q^T x   s.t.  E x = f,  G x <= h

with Mehrotra's predictor-corrector.  Meant for block sub-problems of a few
hundred variables at most, where everything fits in dense LAPACK calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

__all__ = ["QpResult", "solve_qp", "solve_eq_qp"]


@dataclass
class QpResult:
    """Solution with multipliers: ``Q x + q + E^T nu + G^T lam = 0``, ``lam >= 0``."""

    x: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    status: str
    iterations: int


def solve_eq_qp(Q: np.ndarray, q: np.ndarray, E: Optional[np.ndarray] = None,
                f: Optional[np.ndarray] = None) -> QpResult:
    """Equality-constrained QP through its KKT system."""
    n = q.size
    if E is None or E.shape[0] == 0:
        x = sla.solve(Q, -q, assume_a="sym")
        return QpResult(x, np.zeros(0), np.zeros(0), "optimal", 0)
    m = E.shape[0]
    K = np.block([[Q, E.T], [E, np.zeros((m, m))]])
    rhs = np.concatenate([-q, f])
    try:
        sol = sla.solve(K, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, ValueError):
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return QpResult(sol[:n], sol[n:], np.zeros(0), "optimal", 0)


def solve_qp(
    Q: np.ndarray,
    q: np.ndarray,
    E: Optional[np.ndarray] = None,
    f: Optional[np.ndarray] = None,
    G: Optional[np.ndarray] = None,
    h: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> QpResult:
    Q = np.asarray(Q, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    E = np.zeros((0, n)) if E is None else np.asarray(E, dtype=float)
    f = np.zeros(0) if f is None else np.asarray(f, dtype=float)
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    me, mi = E.shape[0], G.shape[0]
    if mi == 0:
        return solve_eq_qp(Q, q, E, f)

    x = np.zeros(n)
    nu = np.zeros(me)
    slack = np.maximum(h - G @ x, 1.0)
    lam = np.ones(mi)
    scale = 1.0 + max(np.max(np.abs(q), initial=0.0), np.max(np.abs(h), initial=0.0),
                      np.max(np.abs(f), initial=0.0))

    def kkt_solve(w, r_d, r_p, r_g):
        # eliminate the slack and lambda blocks: (Q + G^T W G) dx + E^T dnu = ...
        M = Q + G.T @ (w[:, None] * G)
        rhs_x = -r_d - G.T @ (w * r_g)
        if me:
            K = np.block([[M, E.T], [E, np.zeros((me, me))]])
            sol = _solve_sym(K, np.concatenate([rhs_x, -r_p]))
            return sol[:n], sol[n:]
        return _solve_sym(M, rhs_x), np.zeros(0)

    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        r_d = Q @ x + q + E.T @ nu + G.T @ lam
        r_p = E @ x - f
        r_i = G @ x + slack - h
        mu = float(slack @ lam) / mi
        if (max(np.max(np.abs(r_d), initial=0.0), np.max(np.abs(r_p), initial=0.0),
                np.max(np.abs(r_i), initial=0.0)) <= tol * scale and mu <= tol * scale):
            status = "optimal"
            break
        w = lam / slack

        # predictor
        r_g = r_i - slack
        dx, dnu = kkt_solve(w, r_d, r_p, r_g)
        dlam = w * (G @ dx + r_g)
        ds = -r_i - G @ dx
        a_p = _step(slack, ds)
        a_d = _step(lam, dlam)
        mu_aff = float((slack + a_p * ds) @ (lam + a_d * dlam)) / mi
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        target = sigma * mu - ds * dlam
        r_g = r_i - (slack * lam - target) / lam
        dx, dnu = kkt_solve(w, r_d, r_p, r_g)
        dlam = w * (G @ dx + r_g)
        ds = -r_i - G @ dx
        a_p = min(1.0, 0.99 * _step(slack, ds, cap=np.inf))
        a_d = min(1.0, 0.99 * _step(lam, dlam, cap=np.inf))
        x = x + a_p * dx
        slack = slack + a_p * ds
        nu = nu + a_d * dnu
        lam = lam + a_d * dlam
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))):
            status = "failed"
            break
        if np.max(np.abs(x), initial=0.0) > 1e12 * scale:
            status = "infeasible"
            break
    return QpResult(x, nu, lam, status, it)


def _step(v: np.ndarray, dv: np.ndarray, cap: float = 1.0) -> float:
    neg = dv < 0
    if not np.any(neg):
        return cap
    return float(min(cap, np.min(-v[neg] / dv[neg])))


def _solve_sym(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return sla.solve(K, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, ValueError):
        return np.linalg.lstsq(K, rhs, rcond=None)[0]
