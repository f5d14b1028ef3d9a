"""Linear-mapping analysis of multi-block ADMM on equality-constrained QPs.

For ``min 1/2 x^T H x + c^T x  s.t.  A x = b`` one ADMM cycle with update
combination ``sigma`` (a block composition plus an order) is the affine map::

    Lbar_sigma [x; y]^{k+1} = Rbar_sigma [x; y]^k + bbar

with ``S = H + beta A^T A``, ``L_sigma`` the block lower-triangular part of
``S`` in the order ``sigma``, ``Lbar = [[L, 0], [beta A, I]]`` and
``Rbar = [[L - S, A^T], [0, I]]``.  Expectations over random ``sigma`` give
the expected map ``M = E(M_sigma)`` and the second-moment map
``T = E(M_sigma kron M_sigma)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from . import linalg
from .admm import AssumptionViolation
from .blocks import (BlockPartition, ENUMERATION_CAP, contiguous_partition, count_update_combinations,
                     enumerate_partitions, random_partition)
from .problem import Lcqp, ProblemError

__all__ = [
    "MappingSet",
    "SpectralReport",
    "ExpectedMaps",
    "RacRpComparison",
    "Trajectories",
    "EnumerationCapError",
    "KRONECKER_CAP",
    "build_L_sigma",
    "check_assumption1",
    "update_combinations",
    "expected_maps",
    "expected_Q",
    "expected_M",
    "closed_form_M",
    "eig_QS_bound",
    "almost_sure_test",
    "compare_rac_rp",
    "simulate_iterates",
    "analyze",
    "example2_matrix",
    "example2_partition",
    "equality_data",
]

KRONECKER_CAP = 40_000  # bound on (n + m)^2


class EnumerationCapError(ValueError):
    """Exact expectation would need more terms than the cap allows."""


def _as_dense(M) -> np.ndarray:
    return M.toarray() if hasattr(M, "toarray") else np.asarray(M, dtype=float)


def _spectral_radius(M: np.ndarray) -> float:
    return linalg.eigenvalues(M, symmetric=False).spectral_radius


@dataclass
class MappingSet:
    """Matrices of one update combination; ``order`` lists the groups as swept."""

    order: BlockPartition
    S: np.ndarray
    L: np.ndarray
    R: np.ndarray
    Lbar: np.ndarray
    Rbar: np.ndarray
    M: np.ndarray

    @property
    def rho(self) -> float:
        return _spectral_radius(self.M)


def check_assumption1(H, A, beta: float, partition: BlockPartition) -> list[bool]:
    """Whether ``H_ii + beta A_i^T A_i`` is positive definite for each block."""
    H, A = _as_dense(H), _as_dense(A)
    S = H + beta * A.T @ A
    flags = []
    for g in partition.groups:
        try:
            linalg.cholesky(S[np.ix_(g, g)])
            flags.append(True)
        except linalg.NotPositiveDefiniteError:
            flags.append(False)
    return flags


def build_L_sigma(H, A, beta: float, partition: BlockPartition,
                  order: Optional[Sequence[int]] = None) -> MappingSet:
    """Mapping matrices for the update combination ``(partition, order)``.

    ``(L_sigma)_{ij}`` holds the ``S`` blocks with block ``i`` swept no earlier
    than block ``j``; ``M_sigma`` comes from a linear solve against ``Lbar``.
    """
    H, A = _as_dense(H), _as_dense(A)
    n = H.shape[0]
    m = A.shape[0]
    sigma = partition if order is None else partition.reordered(order)
    if not sigma.is_cover(n):
        raise ValueError("partition must cover every index exactly once")
    flags = check_assumption1(H, A, beta, sigma)
    if not all(flags):
        bad = sigma.groups[flags.index(False)]
        raise AssumptionViolation(bad)
    S = H + beta * A.T @ A
    L = np.zeros_like(S)
    for i, gi in enumerate(sigma.groups):
        for gj in sigma.groups[:i + 1]:
            L[np.ix_(gi, gj)] = S[np.ix_(gi, gj)]
    R = L - S
    Lbar = np.block([[L, np.zeros((n, m))], [beta * A, np.eye(m)]])
    Rbar = np.block([[R, A.T], [np.zeros((m, n)), np.eye(m)]])
    M = sla.solve(Lbar, Rbar)
    return MappingSet(order=sigma, S=S, L=L, R=R, Lbar=Lbar, Rbar=Rbar, M=M)


def update_combinations(n: int, p: int, partition: Optional[BlockPartition] = None,
                        cap: int = ENUMERATION_CAP) -> list[BlockPartition]:
    """Every ``sigma`` for RAC (all compositions and orders), or all orders of one partition."""
    if partition is not None:
        if math.factorial(partition.p) > cap:
            raise EnumerationCapError(f"{partition.p}! orders exceed the cap {cap}")
        return [partition.reordered(o) for o in itertools.permutations(range(partition.p))]
    if n % p:
        raise EnumerationCapError(f"exact enumeration needs p | n (n={n}, p={p})")
    total = count_update_combinations(n, p)
    if total > cap:
        raise EnumerationCapError(f"{total} update combinations exceed the cap {cap}")
    out = []
    for part in enumerate_partitions(n, p, cap=cap):
        out.extend(part.reordered(o) for o in itertools.permutations(range(p)))
    return out


@dataclass
class ExpectedMaps:
    """``Q = E(L_sigma^{-1})``, ``M`` from the closed form and its direct average.

    ``exact`` is False for Monte Carlo estimates, with ``terms`` samples.
    """

    Q: np.ndarray
    M: np.ndarray
    M_direct: np.ndarray
    S: np.ndarray
    terms: int
    exact: bool
    T: Optional[np.ndarray] = None


def closed_form_M(Q: np.ndarray, H, A, beta: float) -> np.ndarray:
    """``[[I - QS, QA^T], [-beta A + beta A Q S, I - beta A Q A^T]]``."""
    H, A = _as_dense(H), _as_dense(A)
    n, m = H.shape[0], A.shape[0]
    S = H + beta * A.T @ A
    QS = Q @ S
    top = np.hstack([np.eye(n) - QS, Q @ A.T])
    bottom = np.hstack([-beta * A + beta * A @ QS, np.eye(m) - beta * A @ Q @ A.T])
    return np.vstack([top, bottom])


def _sigmas(n: int, p: int, partition: Optional[BlockPartition], samples: Optional[int],
            seed: int, cap: int) -> tuple[list[BlockPartition], bool]:
    try:
        return update_combinations(n, p, partition, cap), True
    except EnumerationCapError:
        if not samples:
            raise
    rng = np.random.default_rng(seed)
    if partition is None:
        return [random_partition(n, p, rng) for _ in range(samples)], False
    return [partition.reordered(rng.permutation(partition.p)) for _ in range(samples)], False


def expected_maps(H, A, beta: float, n: int, p: int, *, partition: Optional[BlockPartition] = None,
                  kronecker: bool = False, samples: Optional[int] = None, seed: int = 0,
                  cap: int = ENUMERATION_CAP) -> ExpectedMaps:
    """Expectations over ``Gamma_RAC`` (or over the orders of ``partition``).

    Falls back to ``samples`` Monte Carlo draws when exact enumeration would
    exceed ``cap``; without ``samples`` that raises :class:`EnumerationCapError`.
    """
    H, A = _as_dense(H), _as_dense(A)
    m = A.shape[0]
    if kronecker and (n + m) ** 2 > KRONECKER_CAP:
        raise EnumerationCapError(f"(n+m)^2 = {(n + m) ** 2} exceeds {KRONECKER_CAP}")
    sigmas, exact = _sigmas(n, p, partition, samples, seed, cap)
    Qsum = np.zeros((n, n))
    Msum = np.zeros((n + m, n + m))
    Tsum = np.zeros(((n + m) ** 2, (n + m) ** 2)) if kronecker else None
    S = None
    for sigma in sigmas:
        ms = build_L_sigma(H, A, beta, sigma)
        S = ms.S
        Qsum += sla.solve(ms.L, np.eye(n))
        Msum += ms.M
        if kronecker:
            Tsum += np.kron(ms.M, ms.M)
    k = len(sigmas)
    Q = Qsum / k
    M = closed_form_M(Q, H, A, beta)
    return ExpectedMaps(Q=Q, M=M, M_direct=Msum / k, S=S, terms=k, exact=exact,
                        T=None if Tsum is None else Tsum / k)


def expected_Q(H, A, beta: float, n: int, p: int, **kw) -> np.ndarray:
    """``E(L_sigma^{-1})`` over all update combinations."""
    return expected_maps(H, A, beta, n, p, **kw).Q


def expected_M(H, A, beta: float, n: int, p: int, **kw) -> np.ndarray:
    """Expected mapping matrix from the closed form with ``Q = E(L_sigma^{-1})``."""
    return expected_maps(H, A, beta, n, p, **kw).M


def eig_QS_bound(Q: np.ndarray, S: np.ndarray) -> tuple[float, float]:
    """Range of the (real) spectrum of ``QS`` via ``Q^{1/2} S Q^{1/2}``.

    Raises
    ------
    NotPositiveDefiniteError
        If the symmetric part of ``Q`` is not positive definite.
    """
    Qs = 0.5 * (Q + Q.T)
    w, V = sla.eigh(Qs)
    if w.size and w.min() <= 0:
        raise linalg.NotPositiveDefiniteError(f"Q has eigenvalue {w.min():.3e}")
    root = (V * np.sqrt(w)) @ V.T
    K = root @ S @ root
    vals = sla.eigvalsh(0.5 * (K + K.T))
    return float(vals.min()), float(vals.max())


def almost_sure_test(H, A, beta: float, n: int, p: int, mode: str = "rac",
                     partition: Optional[BlockPartition] = None, samples: Optional[int] = None,
                     seed: int = 0) -> float:
    """``rho(E(M_sigma kron M_sigma))`` over RAC combinations or RP orders of ``partition``."""
    mode = mode.lower()
    if mode == "rp":
        if partition is None:
            raise ValueError("RP mode needs a partition")
    elif mode == "rac":
        partition = None
    else:
        raise ValueError(f"unknown mode {mode!r}")
    em = expected_maps(H, A, beta, n, p, partition=partition, kronecker=True, samples=samples, seed=seed)
    return _spectral_radius(em.T)


@dataclass
class RacRpComparison:
    rho_rac: float
    partitions: list
    rho_rp: list

    @property
    def exists_rp_not_faster(self) -> bool:
        """Some composition has ``rho_RP >= rho_RAC`` (the guaranteed direction)."""
        return any(r >= self.rho_rac - 1e-12 for r in self.rho_rp)

    @property
    def all_rp_slower(self) -> bool:
        return all(r > self.rho_rac for r in self.rho_rp)


def compare_rac_rp(H, A, beta: float, n: int, p: int) -> RacRpComparison:
    """Expected spectral radius of RAC against RP on every composition."""
    rho_rac = _spectral_radius(expected_maps(H, A, beta, n, p).M)
    parts = enumerate_partitions(n, p)
    rho_rp = [_spectral_radius(expected_maps(H, A, beta, n, p, partition=u).M) for u in parts]
    return RacRpComparison(rho_rac=rho_rac, partitions=[u.to_lists() for u in parts], rho_rp=rho_rp)


@dataclass
class Trajectories:
    """``norms[t, k] = ||z_k - zbar||_2`` for trial ``t``."""

    norms: np.ndarray
    mode: str

    @property
    def median(self) -> np.ndarray:
        return np.median(self.norms, axis=0)

    @property
    def final(self) -> np.ndarray:
        return self.norms[:, -1]


def simulate_iterates(H, A, beta: float, mode: str = "rac", steps: int = 1000, trials: int = 20,
                      seed: int = 0, p: int = 1, partition: Optional[BlockPartition] = None,
                      c: Optional[np.ndarray] = None, b: Optional[np.ndarray] = None) -> Trajectories:
    """Run the iteration from ``[x0; y0] ~ N(0, 5 I)`` and record distances to the KKT point.

    RAC draws a fresh update combination each step; RP permutes the groups of
    ``partition``.  The error ``z - zbar`` (``c``, ``b`` only fix ``zbar``) obeys ``e_{k+1} = M_sigma e_k``
    whatever ``c`` and ``b`` are, so the affine part is never formed.
    """
    H, A = _as_dense(H), _as_dense(A)
    n, m = H.shape[0], A.shape[0]
    mode = mode.lower()
    rng = np.random.default_rng(seed)
    if mode == "rp":
        if partition is None:
            raise ValueError("RP mode needs a partition")
        p = partition.p
    elif mode != "rac":
        raise ValueError(f"unknown mode {mode!r}")

    if c is not None and np.size(c) != n:
        raise ValueError(f"c must have length {n}")
    if b is not None and np.size(b) != m:
        raise ValueError(f"b must have length {m}")

    try:
        pool = update_combinations(n, p, partition if mode == "rp" else None)
        maps = [build_L_sigma(H, A, beta, s).M for s in pool]
    except EnumerationCapError:
        maps = None
    cache: dict = {}

    def draw() -> np.ndarray:
        if maps is not None:
            return maps[rng.integers(len(maps))]
        sigma = (random_partition(n, p, rng) if mode == "rac"
                 else partition.reordered(rng.permutation(p)))
        key = tuple(tuple(int(i) for i in g) for g in sigma.groups)
        if key not in cache:
            cache[key] = build_L_sigma(H, A, beta, sigma).M
        return cache[key]

    norms = np.empty((trials, steps + 1))
    for t in range(trials):
        e = rng.normal(0.0, math.sqrt(5.0), size=n + m)
        norms[t, 0] = np.linalg.norm(e)
        for k in range(1, steps + 1):
            e = draw() @ e
            norms[t, k] = np.linalg.norm(e)
    return Trajectories(norms=norms, mode=mode)


@dataclass
class SpectralReport:
    n: int
    m: int
    p: int
    beta: float
    rho_M: float
    rho_T: Optional[float]
    eig_QS: tuple
    rho_rp: list = field(default_factory=list)
    assumption1_ok: bool = True
    exact: bool = True
    terms: int = 0
    closed_form_error: float = 0.0

    @property
    def expected_convergent(self) -> bool:
        return self.rho_M < 1.0

    @property
    def almost_sure_convergent(self) -> Optional[bool]:
        return None if self.rho_T is None else self.rho_T < 1.0

    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "p": self.p, "beta": self.beta,
            "rho_M": self.rho_M, "rho_T": self.rho_T,
            "eig_QS": list(self.eig_QS), "rho_rp": list(self.rho_rp),
            "assumption1_ok": self.assumption1_ok, "exact": self.exact, "terms": self.terms,
            "closed_form_error": self.closed_form_error,
            "verdicts": {"expected_convergent": self.expected_convergent,
                         "almost_sure_convergent": self.almost_sure_convergent},
        }


def analyze(H, A, beta: float, p: int, *, samples: Optional[int] = None, seed: int = 0,
            per_partition: bool = True) -> SpectralReport:
    """Full spectral report for RAC with ``p`` blocks.

    The Kronecker test is skipped (``rho_T = None``) beyond its size cap.
    """
    H, A = _as_dense(H), _as_dense(A)
    n, m = H.shape[0], A.shape[0]
    ok = True
    try:
        kron = (n + m) ** 2 <= KRONECKER_CAP
        em = expected_maps(H, A, beta, n, p, kronecker=kron, samples=samples, seed=seed)
    except AssumptionViolation:
        return SpectralReport(n=n, m=m, p=p, beta=beta, rho_M=math.nan, rho_T=None,
                              eig_QS=(math.nan, math.nan), assumption1_ok=False)
    rho_M = _spectral_radius(em.M)
    rho_T = _spectral_radius(em.T) if em.T is not None else None
    try:
        eqs = eig_QS_bound(em.Q, em.S)
    except linalg.NotPositiveDefiniteError:
        eqs = (math.nan, math.nan)
        ok = False
    rho_rp = []
    if per_partition and em.exact and n % p == 0:
        rho_rp = [_spectral_radius(expected_maps(H, A, beta, n, p, partition=u).M)
                  for u in enumerate_partitions(n, p)]
    return SpectralReport(n=n, m=m, p=p, beta=beta, rho_M=rho_M, rho_T=rho_T, eig_QS=eqs, rho_rp=rho_rp,
                          assumption1_ok=ok, exact=em.exact, terms=em.terms,
                          closed_form_error=float(np.max(np.abs(em.M - em.M_direct))))


# --------------------------------------------------------------------------
# fixtures and problem adapters


def example2_matrix(gamma: float = 1.0) -> np.ndarray:
    """6 x 6 matrix of ones with ``1 + gamma`` strictly below the anti-diagonal."""
    A = np.ones((6, 6))
    for i in range(6):
        A[i, 6 - i:] = 1.0 + gamma
    return A


def example2_partition() -> BlockPartition:
    """The composition ``{[x1, x2], [x3, x4], [x5, x6]}``."""
    return contiguous_partition(6, 3)


def equality_data(problem: Lcqp) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(H, A, c, b)`` of an equality-constrained problem with free variables.

    Raises
    ------
    ProblemError
        If the problem has inequality rows or finite bounds.
    """
    if problem.m_ineq:
        raise ProblemError("spectral analysis covers equality-constrained problems only")
    if np.any(np.isfinite(problem.lb)) or np.any(np.isfinite(problem.ub)):
        raise ProblemError("spectral analysis needs free variables (bounds are inequalities)")
    return problem.H.toarray(), problem.A_eq.toarray(), np.asarray(problem.c), np.asarray(problem.b_eq)
