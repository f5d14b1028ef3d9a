"""Factorization kernels used by the block solvers.

Dense blocks go through LAPACK (``scipy.linalg``); large sparse systems use
SuperLU with a symmetric fill-reducing ordering.  Factors are immutable once
built and can be shared between solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "NotPositiveDefiniteError",
    "CholeskyFactor",
    "KktFactor",
    "EigenResult",
    "cholesky",
    "solve_chol",
    "kkt_factor_general",
    "kkt_solve_diagonal",
    "DiagonalKkt",
    "factor_diagonal_kkt",
    "eigenvalues",
    "PIVOT_TOL",
    "DENSE_BLOCK_LIMIT",
]

PIVOT_TOL = 1e-12
DENSE_BLOCK_LIMIT = 400

Matrix = Union[np.ndarray, sp.spmatrix, sp.sparray]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot falls below the pivot tolerance."""

    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


def _as_dense(M: Matrix) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


@dataclass(frozen=True)
class CholeskyFactor:
    """Cholesky factor ``M = L L^T`` (dense) or a sparse LU with symmetric ordering.

    For the sparse path ``L`` is None and ``lu`` holds the SuperLU object;
    ``perm`` is the column ordering SuperLU chose.
    """

    n: int
    L: Optional[np.ndarray] = None
    lu: Optional[spla.SuperLU] = field(default=None, repr=False)
    perm: Optional[np.ndarray] = None

    @property
    def is_sparse(self) -> bool:
        return self.lu is not None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_chol(self, rhs)


def cholesky(M: Matrix, pivot_tol: float = PIVOT_TOL) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix.

    Blocks with at most ``DENSE_BLOCK_LIMIT`` columns are densified.  A pivot
    ``l_ii**2`` below ``pivot_tol * max(diag(M))`` is treated as a failure.

    Raises
    ------
    NotPositiveDefiniteError
        If the matrix is not (numerically) positive definite.
    """
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError(f"cholesky needs a square matrix, got {M.shape}")
    if n == 0:
        return CholeskyFactor(n=0, L=np.zeros((0, 0)))

    if sp.issparse(M) and n > DENSE_BLOCK_LIMIT:
        return _sparse_cholesky(sp.csc_matrix(M), pivot_tol)

    A = _as_dense(M)
    diag = np.diag(A)
    scale = max(float(np.max(np.abs(diag))), 0.0)
    if scale == 0.0 or np.any(diag <= 0):
        bad = int(np.argmin(diag)) if n else None
        raise NotPositiveDefiniteError(f"non-positive diagonal entry at {bad}", bad)
    try:
        L = sla.cholesky(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite ({exc})") from exc
    pivots = np.diag(L) ** 2
    bad = np.flatnonzero(pivots <= pivot_tol * scale)
    if bad.size:
        raise NotPositiveDefiniteError(
            f"pivot {int(bad[0])} is {pivots[bad[0]]:.3e}, below tolerance", int(bad[0])
        )
    return CholeskyFactor(n=n, L=L)


def _sparse_cholesky(M: sp.csc_matrix, pivot_tol: float) -> CholeskyFactor:
    diag = M.diagonal()
    scale = float(np.max(np.abs(diag))) if diag.size else 0.0
    if scale == 0.0 or np.any(diag <= 0):
        raise NotPositiveDefiniteError("non-positive diagonal entry")
    # diag_pivot_thresh=0 keeps the symmetric ordering, so U's diagonal carries
    # the LDL^T pivots and positivity certifies definiteness.
    lu = spla.splu(
        M,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    pivots = lu.U.diagonal()
    bad = np.flatnonzero(pivots <= pivot_tol * scale)
    if bad.size:
        raise NotPositiveDefiniteError("sparse pivot below tolerance", int(lu.perm_c[bad[0]]))
    return CholeskyFactor(n=M.shape[0], lu=lu, perm=lu.perm_c.copy())


def solve_chol(factor: CholeskyFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve ``M x = rhs`` with a factor from :func:`cholesky`."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != factor.n:
        raise ValueError(f"rhs has length {rhs.shape[0]}, factor is {factor.n}x{factor.n}")
    if factor.n == 0:
        return rhs.copy()
    if factor.lu is not None:
        return factor.lu.solve(rhs)
    return sla.cho_solve((factor.L, True), rhs, check_finite=False)


@dataclass(frozen=True)
class KktFactor:
    """Factorization of ``[[H + beta I, sqrt(beta) A^T], [sqrt(beta) A, -I]]``.

    The bordered matrix is quasi-definite; it is factored once and reused.
    ``solve`` takes ``rhs`` of length ``n + m`` and returns ``(x, mu)`` stacked.
    """

    n: int
    m: int
    beta: float
    matrix: Matrix = field(repr=False)
    _dense: Optional[tuple] = field(default=None, repr=False)
    _sparse: Optional[spla.SuperLU] = field(default=None, repr=False)
    _chol: Optional[CholeskyFactor] = field(default=None, repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n + self.m:
            raise ValueError(f"rhs has length {rhs.shape[0]}, expected {self.n + self.m}")
        if self._chol is not None:
            return solve_chol(self._chol, rhs)
        if self._sparse is not None:
            return self._sparse.solve(rhs)
        return sla.lu_solve(self._dense, rhs, check_finite=False)

    def solve_x(self, q: np.ndarray) -> np.ndarray:
        """Return ``x`` solving ``(H + beta I + beta A^T A) x = -q``."""
        return self.solve(np.concatenate([-np.asarray(q, dtype=float), np.zeros(self.m)]))[: self.n]


def kkt_factor_general(H: Matrix, A: Optional[Matrix], beta: float) -> KktFactor:
    """Factor the single-block KKT system used when all variables form one block."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    n = H.shape[0]
    m = 0 if A is None else A.shape[0]
    if m == 0:
        chol = cholesky(_shift(H, beta))
        return KktFactor(n=n, m=0, beta=beta, matrix=_shift(H, beta), _chol=chol)

    sb = np.sqrt(beta)
    if sp.issparse(H) or sp.issparse(A):
        K = sp.bmat(
            [[_shift(sp.csc_matrix(H), beta), sb * sp.csc_matrix(A).T],
             [sb * sp.csc_matrix(A), -sp.identity(m, format="csc")]],
            format="csc",
        )
        if n + m > DENSE_BLOCK_LIMIT:
            try:
                lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise np.linalg.LinAlgError(f"singular KKT system ({exc})") from exc
            return KktFactor(n=n, m=m, beta=beta, matrix=K, _sparse=lu)
        K = K.toarray()
    else:
        H = _as_dense(H)
        A = _as_dense(A)
        K = np.block([[H + beta * np.eye(n), sb * A.T], [sb * A, -np.eye(m)]])
    lu, piv = sla.lu_factor(K, check_finite=True)
    if np.any(np.abs(np.diag(lu)) <= PIVOT_TOL * max(1.0, np.max(np.abs(K)))):
        raise np.linalg.LinAlgError("singular KKT system")
    return KktFactor(n=n, m=m, beta=beta, matrix=K, _dense=(lu, piv))


def _shift(H: Matrix, beta: float) -> Matrix:
    if sp.issparse(H):
        return (sp.csc_matrix(H) + beta * sp.identity(H.shape[0], format="csc")).tocsc()
    return np.asarray(H, dtype=float) + beta * np.eye(H.shape[0])


@dataclass(frozen=True)
class DiagonalKkt:
    """Reusable factor for the diagonal-Hessian single-block system.

    Only the ``m x m`` matrix ``I + beta A D^{-1} A^T`` with ``D = H + beta I``
    is factored.
    """

    d: np.ndarray
    A: Matrix = field(repr=False)
    beta: float
    chol: CholeskyFactor = field(repr=False)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def solve_x(self, q: np.ndarray) -> np.ndarray:
        """Return ``x`` solving ``(diag(d) + beta A^T A) x = -q``."""
        q = np.asarray(q, dtype=float)
        x0 = -q / self.d
        if self.m == 0:
            return x0
        sb = np.sqrt(self.beta)
        mu = solve_chol(self.chol, sb * (self.A @ x0))
        return x0 - sb * (self.A.T @ mu) / self.d


def factor_diagonal_kkt(H_diag: np.ndarray, A: Optional[Matrix], beta: float) -> DiagonalKkt:
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = np.asarray(H_diag, dtype=float) + beta
    if np.any(d <= 0):
        raise NotPositiveDefiniteError("H + beta I has a non-positive diagonal entry")
    if A is None:
        A = np.zeros((0, d.size))
    m = A.shape[0]
    if sp.issparse(A):
        A = sp.csr_matrix(A)
        S = sp.identity(m, format="csc") + beta * (A @ sp.diags(1.0 / d) @ A.T)
        S = S.tocsc()
    else:
        A = np.asarray(A, dtype=float)
        S = np.eye(m) + beta * (A / d) @ A.T
    return DiagonalKkt(d=d, A=A, beta=beta, chol=cholesky(S))


def kkt_solve_diagonal(H_diag: np.ndarray, A: Optional[Matrix], beta: float, rhs: np.ndarray) -> np.ndarray:
    """Solve the single-block system for diagonal ``H`` via an ``m x m`` factorization.

    ``rhs`` is the stacked ``(-q, 0)`` right-hand side (length ``n + m``) or
    just ``-q`` (length ``n``).  Returns ``x``.
    """
    n = np.asarray(H_diag).size
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] not in (n, n + (0 if A is None else A.shape[0])):
        raise ValueError("rhs length does not match the system")
    if rhs.shape[0] > n and np.any(rhs[n:] != 0):
        raise ValueError("kkt_solve_diagonal only supports a zero lower right-hand side")
    return factor_diagonal_kkt(H_diag, A, beta).solve_x(-rhs[:n])


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    spectral_radius: float


def eigenvalues(M: Matrix, symmetric: Optional[bool] = None) -> EigenResult:
    """All eigenvalues of a small square matrix.

    Symmetric input takes the ``eigvalsh`` path (real spectrum); anything else
    goes through the general Hessenberg/QR routine and may return complex values.
    """
    A = _as_dense(M)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"eigenvalues needs a square matrix, got {A.shape}")
    if A.shape[0] == 0:
        return EigenResult(values=np.zeros(0), spectral_radius=0.0)
    if symmetric is None:
        symmetric = np.allclose(A, A.T, rtol=0.0, atol=1e-14 * max(1.0, np.max(np.abs(A))))
    if symmetric:
        vals = sla.eigvalsh(0.5 * (A + A.T))
    else:
        vals = sla.eigvals(A)
        if np.all(vals.imag == 0):
            vals = vals.real
    rho = float(np.max(np.abs(vals)))
    return EigenResult(values=np.asarray(vals), spectral_radius=rho)
