"""Benchmark problem families built as :class:`~racadmm.problem.Lcqp` instances.

Every generator is a pure function of its input dataclass (and the seed inside it).
Objectives are stored in the ``1/2 x^T H x + c^T x`` convention, so models
written as ``x^T V x`` carry ``H = 2 V``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .problem import Lcqp, ProblemError, VarKind

__all__ = [
    "RandomQpSpec",
    "MarkowitzSpec",
    "QapSpec",
    "GraphSpec",
    "SvmSpec",
    "GaussianKernel",
    "random_spectrum",
    "gen_random_lcqp",
    "gen_markowitz",
    "gen_markowitz_like",
    "gen_qap",
    "qap_hessian",
    "maxcut_matrix",
    "cut_weight",
    "gen_maxcut",
    "gen_maxbisection",
    "gen_svm_dual",
    "load_edge_list",
    "load_csv_matrix",
]


# --------------------------------------------------------------------------
# random LCQP


@dataclass(frozen=True)
class RandomQpSpec:
    """Parameters of a random LCQP with Hessian ``U_eta V U_eta^T + zeta e e^T``.

    ``lb``/``ub`` apply to every variable.  Right-hand sides are built from a
    random point in ``[lb, lb + 1]`` so the instance is always feasible.
    """

    n: int
    m_eq: int = 0
    m_ineq: int = 0
    density: float = 1.0
    eta: float = 0.5
    zeta: float = 0.0
    condition: float = 10.0
    seed: int = 0
    lb: float = 0.0
    ub: float = math.inf

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if self.zeta < 0:
            raise ValueError("zeta must be non-negative")
        if self.condition < 1:
            raise ValueError("condition target must be >= 1")
        if self.lb > self.ub or not math.isfinite(self.lb):
            raise ValueError("lb must be finite and not exceed ub")


def random_spectrum(n: int, condition: float, rng: np.random.Generator) -> np.ndarray:
    """Log-uniform diagonal with ``min = 1`` and ``max/min = condition`` exactly.

    The two extreme exponents are pinned so the target is hit exactly; the
    rest are uniform on ``[0, log10(condition)]`` and the order is shuffled.
    """
    top = math.log10(condition)
    u = rng.uniform(0.0, top, size=n)
    if n >= 2:
        u[0], u[1] = 0.0, top
    else:
        u[0] = 0.0
    rng.shuffle(u)
    return 10.0 ** u


def _random_rows(m: int, n: int, density: float, rng: np.random.Generator) -> sp.csr_matrix:
    if m == 0:
        return sp.csr_matrix((0, n))
    if density >= 1.0:
        return sp.csr_matrix(rng.standard_normal((m, n)))
    mask = rng.random((m, n)) < density
    # never leave a row empty
    empty = np.flatnonzero(~mask.any(axis=1))
    mask[empty, rng.integers(0, n, size=empty.size)] = True
    vals = rng.standard_normal((m, n))
    return sp.csr_matrix(np.where(mask, vals, 0.0))


def gen_random_lcqp(spec: RandomQpSpec) -> Lcqp:
    """Random strongly convex LCQP with a controlled Hessian spectrum.

    ``H`` is divided by its largest absolute entry before ``zeta e e^T`` is added.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    V = random_spectrum(n, spec.condition, rng)
    U = rng.random((n, n))
    U_eta = spec.eta * U + (1.0 - spec.eta) * np.eye(n)
    H = (U_eta * V) @ U_eta.T
    H = 0.5 * (H + H.T)
    H /= np.max(np.abs(H))
    H += spec.zeta * np.ones((n, n))
    c = rng.random(n)

    A_eq = _random_rows(spec.m_eq, n, spec.density, rng)
    A_ineq = _random_rows(spec.m_ineq, n, spec.density, rng)
    width = 1.0 if math.isinf(spec.ub) else min(1.0, spec.ub - spec.lb)
    x0 = spec.lb + width * rng.random(n)
    b_eq = A_eq @ x0
    b_ineq = A_ineq @ x0 + rng.random(spec.m_ineq)
    return Lcqp.create(
        H=H, c=c, A_eq=A_eq, b_eq=b_eq, A_ineq=A_ineq, b_ineq=b_ineq,
        lb=np.full(n, spec.lb), ub=np.full(n, spec.ub), name=f"random_lcqp_n{n}_s{spec.seed}",
        meta={"generator": "random_lcqp", "seed": spec.seed, "eta": spec.eta, "zeta": spec.zeta,
              "condition": spec.condition, "density": spec.density},
    )


# --------------------------------------------------------------------------
# Markowitz


@dataclass(frozen=True)
class MarkowitzSpec:
    """Portfolio model inputs.

    Give either returns ``R`` (k observations x N assets) or a covariance
    ``V``.  ``means`` defaults to the column means of ``R`` (zero when only
    ``V`` is given).  ``cardinality`` switches to the binary model.
    """

    R: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    tau: float = 1.0
    kappa: float = 1e-5
    cardinality: Optional[int] = None
    low_rank: bool = False
    binary: bool = False

    def __post_init__(self):
        if self.R is None and self.V is None:
            raise ValueError("MarkowitzSpec needs R or V")
        if self.tau < 0 or self.kappa < 0:
            raise ValueError("tau and kappa must be non-negative")
        if self.low_rank and self.R is None:
            raise ValueError("the low-rank model needs the returns matrix R")


def centered_returns(R: np.ndarray) -> np.ndarray:
    """``B = (R - (1/k) e e^T R) / sqrt(k - 1)`` so that ``B^T B`` is the sample covariance."""
    R = np.asarray(R, dtype=float)
    k = R.shape[0]
    if k < 2:
        raise ValueError("need at least two observations")
    return (R - R.mean(axis=0, keepdims=True)) / math.sqrt(k - 1)


def gen_markowitz(spec: MarkowitzSpec) -> Lcqp:
    """Regularized mean-variance model (continuous, low-rank or cardinality-binary).

    Continuous: ``min x^T V x - tau m^T x + kappa ||x||^2, e^T x = 1, x >= 0``.
    Low-rank: variables ``(x, y)`` with ``B x - y = 0`` and objective
    ``||y||^2 - tau m^T x + kappa ||x||^2``.  Binary: ``e^T x = r``, ``x`` binary.
    """
    if spec.R is not None:
        R = np.asarray(spec.R, dtype=float)
        N = R.shape[1]
        means = R.mean(axis=0) if spec.means is None else np.asarray(spec.means, dtype=float)
    else:
        R = None
        N = np.asarray(spec.V).shape[0]
        means = np.zeros(N) if spec.means is None else np.asarray(spec.means, dtype=float)
    binary = spec.binary or spec.cardinality is not None
    if binary:
        if spec.cardinality is None:
            raise ProblemError("the binary Markowitz model needs a cardinality r")
        if not 0 < spec.cardinality < N:
            raise ProblemError(f"cardinality must lie in (0, {N})")
    meta = {"generator": "markowitz", "tau": spec.tau, "kappa": spec.kappa,
            "means_source": "given" if spec.means is not None else ("returns" if R is not None else "zero")}

    if spec.low_rank:
        B = centered_returns(R)
        k = B.shape[0]
        H = sp.diags(np.concatenate([np.full(N, 2.0 * spec.kappa), np.full(k, 2.0)]))
        c = np.concatenate([-spec.tau * means, np.zeros(k)])
        A_eq = sp.vstack([
            sp.hstack([sp.csr_matrix(np.ones((1, N))), sp.csr_matrix((1, k))]),
            sp.hstack([sp.csr_matrix(B), -sp.identity(k)]),
        ]).tocsr()
        rhs = float(spec.cardinality) if binary else 1.0
        b_eq = np.concatenate([[rhs], np.zeros(k)])
        lb = np.concatenate([np.zeros(N), np.full(k, -np.inf)])
        ub = np.full(N + k, np.inf)
        kinds = [VarKind.BINARY if binary else VarKind.CONTINUOUS] * N + [VarKind.CONTINUOUS] * k
        meta["low_rank"] = True
        return Lcqp.create(H=H, c=c, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub, kinds=kinds,
                           name="markowitz_low_rank", meta=meta)

    V = np.cov(R, rowvar=False) if spec.V is None else np.asarray(spec.V, dtype=float)
    V = np.atleast_2d(V)
    H = 2.0 * (V + spec.kappa * np.eye(N))
    c = -spec.tau * means
    rhs = float(spec.cardinality) if binary else 1.0
    return Lcqp.create(
        H=0.5 * (H + H.T), c=c, A_eq=np.ones((1, N)), b_eq=[rhs], lb=np.zeros(N),
        ub=np.full(N, np.inf), kinds=VarKind.BINARY if binary else VarKind.CONTINUOUS,
        name="markowitz_binary" if binary else "markowitz", meta=meta,
    )


def gen_markowitz_like(n: int, seed: int = 0, kappa: float = 1e-5, condition: float = 10.0,
                       eta: float = 0.5, zeta: float = 0.0) -> Lcqp:
    """One-row Markowitz-type instance: random Hessian and ``c``, ``e^T x = 1``, ``x >= 0``."""
    base = gen_random_lcqp(RandomQpSpec(n=n, eta=eta, zeta=zeta, condition=condition, seed=seed))
    H = base.H + 2.0 * kappa * sp.identity(n, format="csr")
    return Lcqp.create(
        H=H, c=base.c, A_eq=np.ones((1, n)), b_eq=[1.0], lb=np.zeros(n), ub=np.full(n, np.inf),
        name=f"markowitz_like_n{n}_s{seed}",
        meta={"generator": "markowitz_like", "seed": seed, "kappa": kappa},
    )


# --------------------------------------------------------------------------
# QAP


@dataclass(frozen=True)
class QapSpec:
    """Flow ``A`` and distance ``B`` (both r x r)."""

    flow: np.ndarray
    distance: np.ndarray
    delta: float = 1e-3
    relaxed: bool = True

    def __post_init__(self):
        A = np.asarray(self.flow)
        B = np.asarray(self.distance)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
            raise ValueError("flow and distance must be square matrices of equal size")
        if A.shape[0] < 2:
            raise ValueError("QAP needs r >= 2")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def r(self) -> int:
        return np.asarray(self.flow).shape[0]


def qap_hessian(spec: QapSpec) -> tuple[np.ndarray, float]:
    """Return ``(Hh, d)``: the symmetric part of ``A kron B`` and the shift making ``Hh + d I`` strictly diagonally dominant.

    Asymmetric flow or distance data give the same quadratic form once symmetrized.
    """
    Hh = np.kron(np.asarray(spec.flow, dtype=float), np.asarray(spec.distance, dtype=float))
    Hh = 0.5 * (Hh + Hh.T)
    off = np.abs(Hh).sum(axis=1) - np.abs(np.diag(Hh))
    d = float(np.max(off)) + spec.delta
    return Hh, d


def gen_qap(spec: QapSpec) -> Lcqp:
    """Assignment-constrained QP over the ``r x r`` permutation matrix.

    Variable ``x[i * r + j]`` is entry ``X[i, j]`` (row-major), so each row of
    ``X`` is a contiguous super-variable.  The first ``r`` equality rows are
    row sums (local to one super-variable); the next ``r`` are column sums.
    """
    r = spec.r
    n = r * r
    Hh, d = qap_hessian(spec)
    H = 2.0 * (Hh + d * np.eye(n))
    rows = sp.kron(sp.identity(r), np.ones((1, r)))
    cols = sp.kron(np.ones((1, r)), sp.identity(r))
    A_eq = sp.vstack([rows, cols]).tocsr()
    supers = [list(range(i * r, (i + 1) * r)) for i in range(r)]
    return Lcqp.create(
        H=H, c=np.zeros(n), A_eq=A_eq, b_eq=np.ones(2 * r),
        lb=np.zeros(n), ub=np.full(n, 1.0 if not spec.relaxed else np.inf),
        kinds=VarKind.CONTINUOUS if spec.relaxed else VarKind.BINARY,
        # x^T x = r on permutation matrices; the offset makes the binary objective the assignment cost
        c0=0.0 if spec.relaxed else -float(d) * r,
        name=f"qap_r{r}",
        meta={"generator": "qap", "r": r, "d": d, "delta": spec.delta,
              "super_variables": supers, "local_eq_rows": list(range(r)),
              # penalty must outweigh the assignment cost scale for the binary model
              "suggested_beta": float(r) if spec.relaxed else float(n) * max(1.0, float(np.max(np.abs(Hh)))),
              "suggested_p": r if spec.relaxed else math.ceil(r / 2)},
    )


# --------------------------------------------------------------------------
# graph problems


@dataclass(frozen=True)
class GraphSpec:
    """Undirected weighted graph given as ``(u, v, w)`` edges on ``n_vertices`` nodes."""

    n_vertices: int
    edges: tuple = ()
    bisection: bool = False

    def __post_init__(self):
        edges = tuple((int(u), int(v), float(w)) for u, v, w in self.edges)
        for u, v, w in edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ValueError(f"edge ({u},{v}) outside 0..{self.n_vertices - 1}")
            if not math.isfinite(w):
                raise ValueError("edge weights must be finite")
        object.__setattr__(self, "edges", edges)

    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.n_vertices, self.n_vertices))
        for u, v, w in self.edges:
            W[u, v] += w
            W[v, u] += w
        return W


def maxcut_matrix(spec: GraphSpec) -> np.ndarray:
    """``H`` with ``min x^T H x = -maxcut``: ``h_ij = w_ij``, ``h_ii = -(row sum + column sum) / 2``."""
    W = spec.weight_matrix()
    Hm = W.copy()
    np.fill_diagonal(Hm, -0.5 * (W.sum(axis=1) + W.sum(axis=0)))
    return Hm


def cut_weight(spec: GraphSpec, x: Sequence[float]) -> float:
    """Total weight of edges whose endpoints fall on different sides of ``x``."""
    x = np.asarray(x)
    return float(sum(w for u, v, w in spec.edges if x[u] != x[v]))


def gen_maxcut(spec: GraphSpec) -> Lcqp:
    """Unconstrained binary QP whose optimum is minus the maximum cut weight."""
    Hm = maxcut_matrix(spec)
    n = spec.n_vertices
    return Lcqp.create(H=2.0 * Hm, c=np.zeros(n), lb=np.zeros(n), ub=np.ones(n), kinds=VarKind.BINARY,
                       name="maxcut", n=n, meta={"generator": "maxcut"})


def gen_maxbisection(spec: GraphSpec) -> Lcqp:
    """Max-cut plus the balance row ``e^T x = floor(n / 2)``."""
    base = gen_maxcut(spec)
    n = spec.n_vertices
    return base.with_(
        A_eq=sp.csr_matrix(np.ones((1, n))), b_eq=np.array([float(n // 2)]), name="maxbisection",
        # the balance row is enforced per block with a binary surplus variable
        meta={"generator": "maxbisection", "aux_eq_rows": [0]},
    )


# --------------------------------------------------------------------------
# SVM


@dataclass(frozen=True)
class SvmSpec:
    X: np.ndarray
    y: np.ndarray
    C: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y disagree on the number of points")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if self.C <= 0 or self.sigma <= 0:
            raise ValueError("C and sigma must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class GaussianKernel:
    """``K(a, b) = exp(-||a - b||^2 / (2 sigma^2))``."""

    sigma: float

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self.sigma ** 2))


def gen_svm_dual(spec: SvmSpec) -> tuple[Lcqp, GaussianKernel]:
    """C-SVC dual: ``min 1/2 z^T Q z - e^T z, y^T z = 0, 0 <= z <= C``."""
    kernel = GaussianKernel(spec.sigma)
    K = kernel(spec.X, spec.X)
    Q = (spec.y[:, None] * spec.y[None, :]) * K
    n = spec.y.size
    problem = Lcqp.create(
        H=0.5 * (Q + Q.T), c=-np.ones(n), A_eq=spec.y[None, :], b_eq=[0.0],
        lb=np.zeros(n), ub=np.full(n, spec.C), name="svm_dual",
        meta={"generator": "svm_dual", "C": spec.C, "sigma": spec.sigma},
    )
    return problem, kernel


# --------------------------------------------------------------------------
# loaders


def load_edge_list(path: Union[str, os.PathLike], n_vertices: Optional[int] = None,
                   bisection: bool = False) -> GraphSpec:
    """Read ``u v [w]`` lines (0-based, ``#`` comments, default weight 1)."""
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) not in (2, 3):
                raise ProblemError(f"{path}:{no}: expected 'u v [w]'")
            try:
                u, v = int(tok[0]), int(tok[1])
                w = float(tok[2]) if len(tok) == 3 else 1.0
            except ValueError:
                raise ProblemError(f"{path}:{no}: cannot parse {line!r}") from None
            edges.append((u, v, w))
    if n_vertices is None:
        n_vertices = 1 + max((max(u, v) for u, v, _ in edges), default=-1)
    try:
        return GraphSpec(n_vertices=n_vertices, edges=tuple(edges), bisection=bisection)
    except ValueError as exc:
        raise ProblemError(f"{path}: {exc}") from exc


def load_csv_matrix(path: Union[str, os.PathLike], skip_header: bool = False) -> np.ndarray:
    """Dense numeric CSV (returns or feature matrix)."""
    try:
        M = np.loadtxt(path, delimiter=",", skiprows=1 if skip_header else 0, ndmin=2)
    except ValueError as exc:
        raise ProblemError(f"{path}: {exc}") from exc
    return M
