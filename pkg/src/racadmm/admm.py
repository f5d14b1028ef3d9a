"""Multi-block ADMM solvers for linearly constrained convex QPs.

The augmented Lagrangian is::

    1/2 x^T H x + c^T x - y_eq^T (A_eq x - b_eq) - y_ineq^T (A_ineq x + s - b_ineq)
    - z^T (x - xt) + beta/2 (||A_eq x - b_eq||^2 + ||A_ineq x + s - b_ineq||^2 + ||x - xt||^2)

with slacks ``s >= 0`` and the bound copy ``lb <= xt <= ub``.  One iteration
sweeps the primal blocks, then updates ``s``, ``xt``/``z`` in closed form and
finally takes the dual ascent steps.  The bound copy is only introduced for
variables that have a finite bound (or for all of them with ``split_free``).
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Optional, Sequence, TextIO, Union

import numpy as np
import scipy.sparse as sp

from . import linalg
from .blocks import SuperVariableSet, contiguous_partition, detect_structure, random_partition
from .ipm import solve_eq_qp, solve_qp
from .problem import Lcqp, ProblemError, row_scale

__all__ = [
    "Mode",
    "Status",
    "SolverOptions",
    "SolverState",
    "Residuals",
    "TraceRow",
    "SolveResult",
    "AssumptionViolation",
    "Workspace",
    "solve",
    "solve_single_block",
    "solve_variant",
    "select_mode",
    "update_block",
    "update_xtilde",
    "update_slack",
    "update_duals",
    "residuals",
    "verify_solution",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("iter", "r_prim", "r_dual", "objective", "elapsed_ms")
DENSE_FILL = 0.1
SINGLE_BLOCK_DENSITY = 1e-3
SINGLE_BLOCK_MAX_N = 50_000


class Mode(str, Enum):
    RAC = "rac"
    RP = "rp"
    CYCLIC = "cyclic"
    DISTRIBUTED = "distributed"
    SINGLE_BLOCK = "single_block"
    AUTO = "auto"


class Status(str, Enum):
    OPTIMAL = "Optimal"
    ITER_LIMIT = "IterLimit"
    TIME_LIMIT = "TimeLimit"
    DIVERGED = "Diverged"


class AssumptionViolation(linalg.NotPositiveDefiniteError):
    """A block matrix ``Q_ww`` is not positive definite."""

    def __init__(self, block: np.ndarray, detail: str = ""):
        block = np.asarray(block)
        shown = block[:10].tolist()
        more = "..." if block.size > 10 else ""
        super().__init__(f"block {shown}{more} (size {block.size}) is not positive definite {detail}".strip())
        self.block = block


@dataclass
class SolverOptions:
    """Run-time settings.

    ``grouping`` is None, ``"auto"`` (detect structure from the constraint
    matrix) or a :class:`SuperVariableSet`.  ``local_eq_rows`` /
    ``local_ineq_rows`` name constraint rows enforced exactly inside each block
    (partial Lagrangian); ``local_bounds`` moves the variable bounds there too.
    """

    mode: Union[Mode, str] = Mode.RAC
    p: Optional[int] = None
    beta: float = 1.0
    eps: float = 1e-5
    eps_dual: Optional[float] = None
    max_iter: int = 4000
    max_time: Optional[float] = None
    seed: int = 0
    grouping: Any = None
    local_eq_rows: Optional[Sequence[int]] = None
    local_ineq_rows: Optional[Sequence[int]] = None
    local_bounds: bool = False
    x0: Optional[np.ndarray] = None
    split_free: bool = False
    scale_rows: bool = False
    divergence_norm: float = 1e12
    divergence_growth: float = 1e6
    record_trace: bool = True

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.eps_dual is not None and not self.eps_dual > 0:
            raise ValueError("eps_dual must be positive")
        if self.p is not None and self.p < 1:
            raise ValueError("p must be at least 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")

    @property
    def partial_lagrangian(self) -> bool:
        return bool(self.local_eq_rows) or bool(self.local_ineq_rows) or self.local_bounds

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, Enum):
                v = v.value
            elif isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, SuperVariableSet):
                v = {"supers": [s.tolist() for s in v.supers], "shared": v.shared.tolist()}
            elif isinstance(v, (list, tuple)):
                v = [int(i) for i in v]
            out[k] = v
        return out


@dataclass
class SolverState:
    x: np.ndarray
    x_tilde: np.ndarray
    s: np.ndarray
    y_eq: np.ndarray
    y_ineq: np.ndarray
    z: np.ndarray
    iteration: int = 0
    elapsed: float = 0.0

    @classmethod
    def initial(cls, problem: Lcqp, x0: Optional[np.ndarray] = None) -> "SolverState":
        """``x0 = max(0, lb)`` (clipped to ``ub``) unless given; duals and slacks start at zero."""
        if x0 is None:
            x = np.minimum(np.maximum(0.0, problem.lb), problem.ub)
        else:
            x = np.array(x0, dtype=float)
            if x.shape != (problem.n,):
                raise ValueError(f"x0 must have length {problem.n}")
        return cls(
            x=x.copy(), x_tilde=np.clip(x, problem.lb, problem.ub), s=np.zeros(problem.m_ineq),
            y_eq=np.zeros(problem.m_eq), y_ineq=np.zeros(problem.m_ineq), z=np.zeros(problem.n),
        )

    def copy(self) -> "SolverState":
        return SolverState(self.x.copy(), self.x_tilde.copy(), self.s.copy(), self.y_eq.copy(),
                           self.y_ineq.copy(), self.z.copy(), self.iteration, self.elapsed)


@dataclass(frozen=True)
class Residuals:
    r_Aeq: float
    r_Aineq: float
    r_bounds: float
    r_dual: float

    @property
    def r_prim(self) -> float:
        return max(self.r_Aeq, self.r_Aineq, self.r_bounds)

    def to_dict(self) -> dict:
        return {"r_prim": self.r_prim, "r_dual": self.r_dual, "r_Aeq": self.r_Aeq,
                "r_Aineq": self.r_Aineq, "r_bounds": self.r_bounds}


@dataclass(frozen=True)
class TraceRow:
    iter: int
    r_prim: float
    r_dual: float
    objective: float
    elapsed_ms: float


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    status: Status
    iterations: int
    residuals: Residuals
    internal: Residuals
    state: SolverState
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "iterations": self.iterations,
            "x": self.x.tolist(),
            "residuals": self.residuals.to_dict(),
            "internal_residuals": self.internal.to_dict(),
            "y_eq": self.state.y_eq.tolist(),
            "y_ineq": self.state.y_ineq.tolist(),
            "z": self.state.z.tolist(),
            "diagnostics": self.diagnostics,
        }


# --------------------------------------------------------------------------
# helpers


def _inf_norm(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def _maybe_dense(M: sp.spmatrix):
    """Dense array for small/dense matrices, CSC otherwise."""
    rows, cols = M.shape
    if rows * cols == 0:
        return np.zeros((rows, cols))
    if M.nnz >= DENSE_FILL * rows * cols and rows * cols <= 25_000_000:
        return M.toarray()
    return sp.csc_matrix(M)


def _cols(M, idx):
    return M[:, idx]


def _gram(Aw, beta: float) -> np.ndarray:
    if sp.issparse(Aw):
        G = (Aw.T @ Aw) * beta
        return G.toarray() if Aw.shape[1] <= linalg.DENSE_BLOCK_LIMIT else sp.csc_matrix(G)
    return beta * (Aw.T @ Aw)


def _is_diagonal(H: sp.spmatrix) -> bool:
    coo = H.tocoo()
    return bool(np.all(coo.row == coo.col))


def select_mode(problem: Lcqp) -> Mode:
    """Pick single-block or multi-block mode from problem shape.

    Single block when the stacked constraint matrix has density below 1e-3
    (or ``H`` is diagonal with few rows) and ``n <= 50,000``; RAC otherwise.
    """
    n = problem.n
    m = problem.m_eq + problem.m_ineq
    if n > SINGLE_BLOCK_MAX_N:
        return Mode.RAC
    nnz = problem.A_eq.nnz + problem.A_ineq.nnz
    if m > 0 and nnz / (m * n) < SINGLE_BLOCK_DENSITY:
        return Mode.SINGLE_BLOCK
    if _is_diagonal(problem.H) and m <= max(1, n // 10):
        return Mode.SINGLE_BLOCK
    return Mode.RAC


def _default_p(n: int) -> int:
    return max(1, min(n, math.ceil(n / 100)))


# --------------------------------------------------------------------------
# workspace


class Workspace:
    """Matrices and running products for block updates on one problem.

    Keeps ``H x``, ``A_eq x`` and ``A_ineq x`` (global rows only) current as
    blocks move, so a block gradient costs ``O(|w| (n + m))``.
    """

    def __init__(self, problem: Lcqp, state: SolverState, beta: float, *,
                 local_eq_rows=None, local_ineq_rows=None, local_bounds: bool = False,
                 split_free: bool = False):
        self.problem = problem
        self.state = state
        self.beta = float(beta)
        n = problem.n
        self.n = n
        le = np.zeros(problem.m_eq, dtype=bool)
        li = np.zeros(problem.m_ineq, dtype=bool)
        if local_eq_rows is not None and len(local_eq_rows):
            le[np.asarray(local_eq_rows, dtype=int)] = True
        if local_ineq_rows is not None and len(local_ineq_rows):
            li[np.asarray(local_ineq_rows, dtype=int)] = True
        self.geq = np.flatnonzero(~le)
        self.leq = np.flatnonzero(le)
        self.gin = np.flatnonzero(~li)
        self.lin = np.flatnonzero(li)
        self.local_bounds = bool(local_bounds)

        self.H = _maybe_dense(problem.H)
        self.c = np.asarray(problem.c)
        self.Ae = _maybe_dense(problem.A_eq[self.geq])
        self.be = problem.b_eq[self.geq]
        self.Ai = _maybe_dense(problem.A_ineq[self.gin])
        self.bi = problem.b_ineq[self.gin]
        self.Le = sp.csr_matrix(problem.A_eq[self.leq])
        self.bLe = problem.b_eq[self.leq]
        self.Li = sp.csr_matrix(problem.A_ineq[self.lin])
        self.bLi = problem.b_ineq[self.lin]
        self.Le_csc = self.Le.tocsc()
        self.Li_csc = self.Li.tocsc()

        finite = np.isfinite(problem.lb) | np.isfinite(problem.ub)
        if self.local_bounds:
            self.mask = np.zeros(n, dtype=bool)
        else:
            self.mask = np.ones(n, dtype=bool) if split_free else finite
        self.maskf = self.mask.astype(float)
        self.refresh()

    @property
    def has_local(self) -> bool:
        return self.leq.size > 0 or self.lin.size > 0 or self.local_bounds

    def refresh(self) -> None:
        x = self.state.x
        self.Hx = np.asarray(self.H @ x).reshape(-1)
        self.Aex = np.asarray(self.Ae @ x).reshape(-1)
        self.Aix = np.asarray(self.Ai @ x).reshape(-1)
        self.refresh_duals()

    def refresh_duals(self) -> None:
        st = self.state
        self.ATy = np.asarray(self.Ae.T @ st.y_eq[self.geq]).reshape(-1) + \
            np.asarray(self.Ai.T @ st.y_ineq[self.gin]).reshape(-1)

    # ---- block pieces

    def block_matrix(self, w: np.ndarray):
        """``(H + beta A^T A + beta D)_ww`` over the global rows."""
        if sp.issparse(self.H):
            Hw = self.H[w][:, w]
            Hw = Hw.toarray() if w.size <= linalg.DENSE_BLOCK_LIMIT else sp.csc_matrix(Hw)
        else:
            Hw = self.H[np.ix_(w, w)]
        Q = Hw + _gram(_cols(self.Ae, w), self.beta) + _gram(_cols(self.Ai, w), self.beta)
        d = self.beta * self.maskf[w]
        if sp.issparse(Q):
            return (Q + sp.diags(d)).tocsc()
        Q = np.array(Q, dtype=float)
        Q[np.diag_indices_from(Q)] += d
        return Q

    def block_gradient(self, w: np.ndarray, penalty_scale: float = 1.0) -> np.ndarray:
        """Gradient of the augmented Lagrangian with respect to ``x_w`` at the current point."""
        st = self.state
        b = self.beta
        g = self.Hx[w] + self.c[w] - self.ATy[w]
        g = g - self.maskf[w] * (st.z[w] - b * (st.x[w] - st.x_tilde[w]))
        if self.Ae.shape[0]:
            g = g + (b * penalty_scale) * np.asarray(_cols(self.Ae, w).T @ (self.Aex - self.be)).reshape(-1)
        if self.Ai.shape[0]:
            r = self.Aix + st.s[self.gin] - self.bi
            g = g + (b * penalty_scale) * np.asarray(_cols(self.Ai, w).T @ r).reshape(-1)
        return g

    def apply(self, w: np.ndarray, delta: np.ndarray) -> None:
        if not np.any(delta):
            return
        self.state.x[w] += delta
        self.Hx += np.asarray(_cols(self.H, w) @ delta).reshape(-1)
        if self.Ae.shape[0]:
            self.Aex += np.asarray(_cols(self.Ae, w) @ delta).reshape(-1)
        if self.Ai.shape[0]:
            self.Aix += np.asarray(_cols(self.Ai, w) @ delta).reshape(-1)

    def factor(self, w: np.ndarray, cache: Optional[dict] = None, key=None):
        if cache is not None and key in cache:
            return cache[key]
        try:
            f = linalg.cholesky(self.block_matrix(w))
        except linalg.NotPositiveDefiniteError as exc:
            raise AssumptionViolation(w, f"({exc})") from exc
        if cache is not None:
            cache[key] = f
        return f

    def block_step(self, w: np.ndarray, cache: Optional[dict] = None, key=None,
                   penalty_scale: float = 1.0) -> np.ndarray:
        """Minimizing step for block ``w`` (not applied)."""
        g = self.block_gradient(w, penalty_scale)
        if self.has_local:
            return self._local_step(w, g)
        f = self.factor(w, cache, key)
        return -linalg.solve_chol(f, g)

    def _local_rows(self, M_csc: sp.csc_matrix, w: np.ndarray) -> np.ndarray:
        if M_csc.shape[0] == 0:
            return np.zeros(0, dtype=int)
        sub = M_csc[:, w]
        return np.unique(sub.indices)

    def _local_step(self, w: np.ndarray, g: np.ndarray) -> np.ndarray:
        st = self.state
        pr = self.problem
        Q = self.block_matrix(w)
        Q = Q.toarray() if sp.issparse(Q) else Q
        x = st.x
        re = self._local_rows(self.Le_csc, w)
        ri = self._local_rows(self.Li_csc, w)
        E = self.Le[re][:, w].toarray()
        f = self.bLe[re] - np.asarray(self.Le[re] @ x).reshape(-1)
        G = self.Li[ri][:, w].toarray()
        h = self.bLi[ri] - np.asarray(self.Li[ri] @ x).reshape(-1)
        nb_lo = nb_hi = np.zeros(0, dtype=int)
        if self.local_bounds:
            lo = pr.lb[w] - x[w]
            hi = pr.ub[w] - x[w]
            nb_lo = np.flatnonzero(np.isfinite(lo))
            nb_hi = np.flatnonzero(np.isfinite(hi))
            eye = np.eye(w.size)
            G = np.vstack([G, -eye[nb_lo], eye[nb_hi]])
            h = np.concatenate([h, -lo[nb_lo], hi[nb_hi]])
        if G.shape[0] == 0:
            res = solve_eq_qp(Q, g, E, f)
        else:
            res = solve_qp(Q, g, E, f, G, h)
            if res.status != "optimal":
                self.failures = getattr(self, "failures", 0) + 1
        if re.size:
            st.y_eq[self.leq[re]] = -res.nu
        k = ri.size
        if k:
            st.y_ineq[self.lin[ri]] = -res.lam[:k]
        if self.local_bounds:
            zw = np.zeros(w.size)
            zw[nb_lo] += res.lam[k:k + nb_lo.size]
            zw[nb_hi] -= res.lam[k + nb_lo.size:]
            st.z[w] = zw
        return res.x

    # ---- closed-form steps

    def update_slack(self) -> None:
        st = self.state
        if self.gin.size:
            st.s[self.gin] = np.maximum(0.0, st.y_ineq[self.gin] / self.beta + self.bi - self.Aix)
        if self.lin.size:
            st.s[self.lin] = np.maximum(0.0, self.bLi - np.asarray(self.Li @ st.x).reshape(-1))

    def update_split(self) -> None:
        st = self.state
        pr = self.problem
        m = self.mask
        if self.local_bounds:
            st.x_tilde = st.x.copy()
            return
        st.x_tilde = st.x.copy()
        st.x_tilde[m] = np.minimum(np.maximum(pr.lb[m], st.x[m] - st.z[m] / self.beta), pr.ub[m])
        st.z[m] -= self.beta * (st.x[m] - st.x_tilde[m])
        st.z[~m] = 0.0

    def update_duals(self, step_scale: float = 1.0) -> None:
        st = self.state
        b = self.beta * step_scale
        if self.geq.size:
            st.y_eq[self.geq] -= b * (self.Aex - self.be)
        if self.gin.size:
            st.y_ineq[self.gin] -= b * (self.Aix + st.s[self.gin] - self.bi)
        self.refresh_duals()

    def residuals(self) -> Residuals:
        return residuals(self.state, self.problem, Hx=self.Hx)

    def objective(self) -> float:
        x = self.state.x
        return float(0.5 * x @ self.Hx + self.c @ x + self.problem.c0)


# --------------------------------------------------------------------------
# public single-step operations


def update_block(state: SolverState, problem: Lcqp, omega: Sequence[int], beta: float = 1.0,
                 cache: Optional[dict] = None, split_free: bool = False) -> np.ndarray:
    """Minimize the augmented Lagrangian over ``x[omega]`` with everything else fixed.

    Solves ``Q_ww x_w = -(q_w + q_hat)`` through a Cholesky factor (cached in
    ``cache`` under the block's index tuple when a dict is supplied).  Updates
    ``state.x`` in place and returns the new block values.
    """
    w = np.asarray(omega, dtype=np.intp)
    ws = Workspace(problem, state, beta, split_free=split_free)
    key = tuple(int(i) for i in w)
    ws.apply(w, ws.block_step(w, cache, key))
    return state.x[w].copy()


def update_xtilde(state: SolverState, problem: Lcqp, beta: float) -> np.ndarray:
    """``xt = min(max(lb, x - z / beta), ub)``."""
    state.x_tilde = np.minimum(np.maximum(problem.lb, state.x - state.z / beta), problem.ub)
    return state.x_tilde


def update_slack(state: SolverState, problem: Lcqp, beta: float) -> np.ndarray:
    """``s = max(0, y_ineq / beta + b_ineq - A_ineq x)``."""
    state.s = np.maximum(0.0, state.y_ineq / beta + problem.b_ineq - problem.A_ineq @ state.x)
    return state.s


def update_duals(state: SolverState, problem: Lcqp, beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dual ascent on the equality, inequality and bound-copy constraints."""
    x = state.x
    state.y_eq = state.y_eq - beta * (problem.A_eq @ x - problem.b_eq)
    state.y_ineq = state.y_ineq - beta * (problem.A_ineq @ x + state.s - problem.b_ineq)
    state.z = state.z - beta * (x - state.x_tilde)
    return state.y_eq, state.y_ineq, state.z


def residuals(state: SolverState, problem: Lcqp, Hx: Optional[np.ndarray] = None) -> Residuals:
    """Relative primal and dual residuals of the current iterate (infinity norms)."""
    x = state.x
    Hx = np.asarray(problem.H @ x).reshape(-1) if Hx is None else Hx
    Aex = problem.A_eq @ x
    Aixs = problem.A_ineq @ x + state.s
    r_eq = _inf_norm(Aex - problem.b_eq) / (1.0 + max(_inf_norm(Aex), _inf_norm(problem.b_eq)))
    r_in = _inf_norm(Aixs - problem.b_ineq) / (1.0 + max(_inf_norm(Aixs), _inf_norm(problem.b_ineq)))
    r_b = _inf_norm(x - state.x_tilde) / (1.0 + max(_inf_norm(x), _inf_norm(state.x_tilde)))
    ATye = problem.A_eq.T @ state.y_eq
    ATyi = problem.A_ineq.T @ state.y_ineq
    num = _inf_norm(Hx + problem.c - ATye - ATyi - state.z)
    den = 1.0 + max(_inf_norm(Hx), _inf_norm(problem.c), _inf_norm(ATye), _inf_norm(ATyi), _inf_norm(state.z))
    return Residuals(r_Aeq=r_eq, r_Aineq=r_in, r_bounds=r_b, r_dual=num / den)


def verify_solution(problem: Lcqp, x: np.ndarray, y: Optional[np.ndarray] = None,
                    y_bounds: Optional[np.ndarray] = None) -> Residuals:
    """Solver-independent residuals on the unscaled model.

    ``y`` stacks the equality then inequality multipliers; ``y_bounds`` are the
    bound multipliers.  Inequality and bound residuals count violations only.
    """
    x = np.asarray(x, dtype=float)
    me, mi = problem.m_eq, problem.m_ineq
    y = np.zeros(me + mi) if y is None else np.asarray(y, dtype=float)
    yb = np.zeros(problem.n) if y_bounds is None else np.asarray(y_bounds, dtype=float)
    if y.shape != (me + mi,):
        raise ValueError(f"y must have length {me + mi}")
    Aex = problem.A_eq @ x
    Aix = problem.A_ineq @ x
    r_eq = _inf_norm(Aex - problem.b_eq) / (1.0 + max(_inf_norm(Aex), _inf_norm(problem.b_eq)))
    r_in = _inf_norm(np.maximum(0.0, Aix - problem.b_ineq)) / \
        (1.0 + max(_inf_norm(Aix), _inf_norm(problem.b_ineq)))
    lb_f = problem.lb[np.isfinite(problem.lb)]
    ub_f = problem.ub[np.isfinite(problem.ub)]
    lo_v = _inf_norm(np.maximum(0.0, problem.lb - x))
    hi_v = _inf_norm(np.maximum(0.0, x - problem.ub))
    xn = _inf_norm(x)
    r_b = max(lo_v / (1.0 + max(xn, _inf_norm(lb_f))), hi_v / (1.0 + max(xn, _inf_norm(ub_f))))
    Hx = problem.H @ x
    ATy = problem.A_eq.T @ y[:me] + problem.A_ineq.T @ y[me:]
    num = _inf_norm(Hx + problem.c - ATy - yb)
    den = 1.0 + max(_inf_norm(Hx), _inf_norm(problem.c), _inf_norm(ATy), _inf_norm(yb))
    return Residuals(r_Aeq=r_eq, r_Aineq=r_in, r_bounds=r_b, r_dual=num / den)


def write_trace_csv(trace: Sequence[TraceRow], dest: Union[str, TextIO]) -> None:
    """Write ``iter,r_prim,r_dual,objective,elapsed_ms`` rows."""
    own = isinstance(dest, str)
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        for row in trace:
            wr.writerow([row.iter, repr(row.r_prim), repr(row.r_dual), repr(row.objective),
                         f"{row.elapsed_ms:.3f}"])
    finally:
        if own:
            fh.close()


# --------------------------------------------------------------------------
# drivers


def _supers_for(problem: Lcqp, options: SolverOptions, p: int) -> Optional[SuperVariableSet]:
    g = options.grouping
    if g is None:
        return None
    if isinstance(g, SuperVariableSet):
        return g
    if isinstance(g, str) and g == "auto":
        A = sp.vstack([problem.A_eq, problem.A_ineq]).tocsr()
        if A.shape[0] == 0:
            return None
        found = detect_structure(A, target_groups=p)
        return None if found.degenerate else found
    if isinstance(g, (list, tuple)):
        return SuperVariableSet.from_lists(g)
    raise ValueError(f"unsupported grouping {g!r}")


class _Runner:
    """Shared iteration loop: sweep, closed-form steps, residuals, termination."""

    def __init__(self, problem: Lcqp, options: SolverOptions):
        self.problem = problem
        self.options = options
        self.state = SolverState.initial(problem, options.x0)
        self.ws = Workspace(
            problem, self.state, options.beta, local_eq_rows=options.local_eq_rows,
            local_ineq_rows=options.local_ineq_rows, local_bounds=options.local_bounds,
            split_free=options.split_free,
        )
        self.trace: list[TraceRow] = []
        self.diagnostics: dict = {}

    def run(self, sweep) -> SolveResult:
        opts = self.options
        ws = self.ws
        st = self.state
        eps_p = opts.eps
        eps_d = opts.eps if opts.eps_dual is None else opts.eps_dual
        t0 = time.perf_counter()
        best = math.inf
        status = Status.ITER_LIMIT
        res = ws.residuals()
        if opts.max_iter == 0:
            status = Status.ITER_LIMIT
        for k in range(1, opts.max_iter + 1):
            sweep()
            ws.update_slack()
            ws.update_split()
            ws.update_duals(self.dual_scale)
            st.iteration = k
            st.elapsed = time.perf_counter() - t0
            res = ws.residuals()
            rp, rd = res.r_prim, res.r_dual
            if opts.record_trace:
                self.trace.append(TraceRow(k, rp, rd, ws.objective(), 1000.0 * st.elapsed))
            worst = max(rp, rd)
            if not (np.all(np.isfinite(st.x)) and math.isfinite(worst)) or \
                    _inf_norm(st.x) > opts.divergence_norm or \
                    worst > opts.divergence_growth * max(best, opts.eps):
                status = Status.DIVERGED
                break
            best = min(best, worst)
            if rp < eps_p and rd < eps_d:
                status = Status.OPTIMAL
                break
            if opts.max_time is not None and st.elapsed >= opts.max_time:
                status = Status.TIME_LIMIT
                break
        failures = getattr(ws, "failures", 0)
        if failures:
            self.diagnostics["subproblem_failures"] = failures
        return _finish(self.problem, st, status, res, self.trace, self.diagnostics, ws)

    dual_scale = 1.0


def _finish(problem, st, status, internal, trace, diagnostics, ws) -> SolveResult:
    y = np.concatenate([st.y_eq, st.y_ineq])
    verified = verify_solution(problem, st.x, y, st.z)
    obj = problem.objective(st.x)
    return SolveResult(x=st.x.copy(), objective=obj, status=status, iterations=st.iteration,
                       residuals=verified, internal=internal, state=st, trace=trace,
                       diagnostics=diagnostics)


def solve_variant(problem: Lcqp, options: SolverOptions) -> SolveResult:
    """Multi-block solve in RAC, RP, CYCLIC or DISTRIBUTED mode.

    RAC re-draws the composition every iteration (and re-factors every block);
    RP keeps one composition and permutes the order; CYCLIC keeps both fixed;
    DISTRIBUTED updates all blocks from the same iterate with the residual
    split evenly across blocks and a ``beta / p`` dual step.
    """
    mode = Mode(options.mode)
    if mode not in (Mode.RAC, Mode.RP, Mode.CYCLIC, Mode.DISTRIBUTED):
        raise ValueError(f"solve_variant does not handle mode {mode.value}")
    n = problem.n
    p = options.p if options.p is not None else _default_p(n)
    supers = _supers_for(problem, options, p)
    atoms = len(supers.atoms(n)) if supers is not None else n
    if p > atoms:
        raise ValueError(f"p={p} exceeds the number of assignable units ({atoms})")
    rng = np.random.default_rng(options.seed)
    runner = _Runner(problem, options)
    ws = runner.ws
    runner.diagnostics.update({"mode": mode.value, "p": p, "grouping": supers is not None})

    if mode is Mode.RAC:
        def sweep():
            part = random_partition(n, p, rng, supers)
            for w in part.groups:
                ws.apply(w, ws.block_step(w))
    else:
        fixed = random_partition(n, p, rng, supers) if supers is not None else contiguous_partition(n, p)
        groups = fixed.groups
        cache: dict = {}
        runner.diagnostics["partition"] = [g.tolist() for g in groups] if n <= 1000 else None
        if mode is Mode.RP:
            def sweep():
                for j in rng.permutation(p):
                    w = groups[j]
                    ws.apply(w, ws.block_step(w, cache, j))
        elif mode is Mode.CYCLIC:
            def sweep():
                for j, w in enumerate(groups):
                    ws.apply(w, ws.block_step(w, cache, j))
        else:
            runner.dual_scale = 1.0 / p

            def sweep():
                steps = [ws.block_step(w, cache, j, penalty_scale=1.0 / p) for j, w in enumerate(groups)]
                for w, d in zip(groups, steps):
                    ws.apply(w, d)
    return runner.run(sweep)


def solve_single_block(problem: Lcqp, options: SolverOptions) -> SolveResult:
    """All variables in one block with a KKT factorization computed once.

    Diagonal ``H`` uses the ``m x m`` reduced system; otherwise the bordered
    ``(n + m)`` system is factored.  With local rows or bounds the block is
    solved as a constrained sub-problem each iteration instead.
    """
    runner = _Runner(problem, options)
    ws = runner.ws
    n = problem.n
    everything = np.arange(n)
    runner.diagnostics["mode"] = Mode.SINGLE_BLOCK.value
    if ws.has_local:
        runner.diagnostics["kkt_path"] = "local"

        def sweep():
            ws.apply(everything, ws.block_step(everything))
        return runner.run(sweep)

    beta = options.beta
    A = sp.vstack([problem.A_eq[ws.geq], problem.A_ineq[ws.gin]]).tocsr()
    shift = beta * (1.0 - ws.maskf)  # coordinates without a bound copy get no beta I term
    factor = None
    if _is_diagonal(problem.H):
        try:
            factor = linalg.factor_diagonal_kkt(problem.H.diagonal() - shift, A, beta)
            runner.diagnostics["kkt_path"] = "diagonal"
        except linalg.NotPositiveDefiniteError:
            factor = None
    if factor is None:
        H_eff = problem.H - sp.diags(shift)
        Hs = H_eff if (n + A.shape[0] > linalg.DENSE_BLOCK_LIMIT) else H_eff.toarray()
        As = A if sp.issparse(Hs) else A.toarray()
        try:
            factor = linalg.kkt_factor_general(Hs, As, beta)
        except np.linalg.LinAlgError as exc:
            raise AssumptionViolation(everything, f"(singular KKT system: {exc})") from exc
        runner.diagnostics["kkt_path"] = "general"

    st = runner.state

    def sweep():
        g = ws.block_gradient(everything)
        # linear term of the whole-vector quadratic model, i.e. gradient at x = 0
        q = g - (ws.Hx + beta * np.asarray(A.T @ (A @ st.x)).reshape(-1) + beta * ws.maskf * st.x)
        x_new = factor.solve_x(q)
        st.x[:] = x_new
        _refresh_products(ws)

    return runner.run(sweep)


def _refresh_products(ws: Workspace) -> None:
    x = ws.state.x
    ws.Hx = np.asarray(ws.H @ x).reshape(-1)
    ws.Aex = np.asarray(ws.Ae @ x).reshape(-1)
    ws.Aix = np.asarray(ws.Ai @ x).reshape(-1)


def solve(problem: Lcqp, options: Optional[SolverOptions] = None) -> SolveResult:
    """Solve a continuous LCQP.

    Raises
    ------
    ProblemError
        If any variable is binary or integer.
    AssumptionViolation
        If a block matrix is not positive definite.
    """
    options = SolverOptions() if options is None else options
    if not problem.is_continuous:
        raise ProblemError("solve handles continuous problems only; use mip.solve_mip")
    mode = Mode(options.mode)
    if mode is Mode.AUTO:
        mode = select_mode(problem)
    opts = SolverOptions(**{**options.__dict__, "mode": mode})

    work, scaling = problem, None
    if opts.scale_rows:
        work, scaling = row_scale(problem)
    if mode is Mode.SINGLE_BLOCK:
        result = solve_single_block(work, opts)
    else:
        result = solve_variant(work, opts)
    if scaling is not None:
        st = result.state
        st.y_eq, st.y_ineq = scaling.unscale_duals(st.y_eq, st.y_ineq)
        st.s = st.s * scaling.ineq
        y = np.concatenate([st.y_eq, st.y_ineq])
        result.residuals = verify_solution(problem, st.x, y, st.z)
        result.objective = problem.objective(st.x)
    result.diagnostics["selected_mode"] = mode.value
    return result
