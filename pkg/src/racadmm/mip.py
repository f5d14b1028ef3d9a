"""Solve-perturb-solve driver for binary and mixed-integer QPs.

Bounds and designated rows are enforced exactly inside each block (partial
Lagrangian); blocks with discrete variables are solved to global optimality
by enumeration or a small depth-first branch-and-bound.  When the iterates
keep landing on feasible points that do not beat the incumbent, the best
point is perturbed and the ADMM sweeps continue from there.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .admm import SolveResult, SolverOptions, SolverState, Status, Workspace, _finish
from .blocks import SuperVariableSet, random_partition
from .ipm import solve_qp
from .problem import Lcqp, ProblemError, VarKind

__all__ = [
    "MipOptions",
    "BestSolution",
    "MipResult",
    "PERTURB_KINDS",
    "solve_mip",
    "exact_binary_subsolve",
    "exact_discrete_subsolve",
    "sample_perturb_count",
    "perturb",
    "feasibility",
    "gap",
    "initial_point",
]

PERTURB_KINDS = ("auto", "reassign", "bit_flip", "swap_balanced", "qap_super_swap")
ENUM_CAP = 16
BB_CAP = 30
MIXED_STATE_CAP = 4096


@dataclass
class MipOptions:
    """Perturbation and termination settings.

    ``lam`` (mean of the truncated exponential) defaults to ``0.4`` times the
    number of perturbable atoms and ``np_max`` to that number.  ``n_trial``
    defaults to ``min(2, 0.005 n)``: a perturbation fires once that many
    non-improving feasible iterates have been seen.
    """

    lam: Optional[float] = None
    np_min: int = 2
    np_max: Optional[int] = None
    n_trial: Optional[float] = None
    feas_eps: float = 1e-6
    max_time: Optional[float] = 10.0
    max_iter: int = 2000
    max_no_improve: Optional[int] = None
    target: Optional[float] = None
    kind: str = "auto"
    init: str = "auto"
    aux_eq_rows: Optional[Sequence[int]] = None
    enum_cap: int = ENUM_CAP
    bb_cap: int = BB_CAP

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.np_min < 1:
            raise ValueError("np_min must be at least 1")
        if self.np_max is not None and self.np_max < self.np_min:
            raise ValueError("np_max must be at least np_min")
        if self.kind not in PERTURB_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.feas_eps < 0:
            raise ValueError("feas_eps must be non-negative")

    def trials_before_perturb(self, n: int) -> float:
        return min(2.0, 0.005 * n) if self.n_trial is None else float(self.n_trial)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in self.__dict__.items()}


@dataclass
class BestSolution:
    x: Optional[np.ndarray] = None
    objective: float = math.inf
    feasible: bool = False
    found_at: float = math.nan
    iteration: int = -1


@dataclass
class MipResult:
    best: BestSolution
    result: SolveResult
    stop_reason: str
    iterations: int
    perturbations: int
    events: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "feasible" if self.best.feasible else "infeasible"

    def to_dict(self) -> dict:
        b = self.best
        return {
            "status": self.status,
            "stop_reason": self.stop_reason,
            "objective": b.objective if b.feasible else None,
            "x": None if b.x is None else b.x.tolist(),
            "found_at": b.found_at if b.feasible else None,
            "found_at_iteration": b.iteration,
            "iterations": self.iterations,
            "perturbations": self.perturbations,
            "events": self.events,
            "diagnostics": self.diagnostics,
        }


# --------------------------------------------------------------------------
# measures


def feasibility(problem: Lcqp, x: np.ndarray, eps: float) -> bool:
    """Largest of the equality, one-sided inequality and bound violations is at most ``eps``."""
    x = np.asarray(x, dtype=float)
    viol = 0.0
    if problem.m_eq:
        viol = max(viol, float(np.max(np.abs(problem.A_eq @ x - problem.b_eq))))
    if problem.m_ineq:
        viol = max(viol, float(np.max(np.maximum(0.0, problem.A_ineq @ x - problem.b_ineq))))
    if problem.n:
        viol = max(viol, float(np.max(np.maximum(0.0, problem.lb - x))),
                   float(np.max(np.maximum(0.0, x - problem.ub))))
    return viol <= eps


def gap(found: float, reference: float, maximize: bool = False) -> float:
    """``(f_S - f_opt) / (1 + |f_opt|)``, negated for maximization."""
    if not math.isfinite(reference):
        raise ValueError("reference objective must be finite")
    g = (found - reference) / (1.0 + abs(reference))
    return -g if maximize else g


# --------------------------------------------------------------------------
# exact block sub-solvers


def _feasible_rows(X: np.ndarray, E, f, G, h, tol: float) -> np.ndarray:
    ok = np.ones(X.shape[0], dtype=bool)
    if E is not None and E.shape[0]:
        ok &= np.all(np.abs(X @ E.T - f) <= tol * (1.0 + np.abs(f)), axis=1)
    if G is not None and G.shape[0]:
        ok &= np.all(X @ G.T - h <= tol * (1.0 + np.abs(h)), axis=1)
    return ok


def _argmin_first(obj: np.ndarray, ok: np.ndarray) -> Optional[int]:
    if not np.any(ok):
        return None
    vals = np.where(ok, obj, np.inf)
    best = vals.min()
    tie = 1e-9 * (1.0 + abs(best))
    return int(np.flatnonzero(vals <= best + tie)[0])


def exact_discrete_subsolve(Q: np.ndarray, q: np.ndarray, domains: Sequence[Sequence[float]],
                            E=None, f=None, G=None, h=None, tol: float = 1e-9,
                            cap: int = 1 << ENUM_CAP) -> Optional[np.ndarray]:
    """Minimize ``1/2 x^T Q x + q^T x`` over a finite product domain by enumeration.

    States are visited in lexicographic order and the first optimal one wins.
    Returns None when no state satisfies ``E x = f`` and ``G x <= h``.
    """
    Q = np.asarray(Q, dtype=float)
    q = np.asarray(q, dtype=float)
    total = math.prod(len(d) for d in domains)
    if total > cap:
        raise ValueError(f"{total} states exceed the enumeration cap {cap}")
    if not domains:
        return np.zeros(0)
    X = np.array(list(itertools.product(*domains)), dtype=float)
    obj = 0.5 * np.einsum("ij,jk,ik->i", X, Q, X) + X @ q
    k = _argmin_first(obj, _feasible_rows(X, E, f, G, h, tol))
    return None if k is None else X[k].copy()


def _bb_binary(Q, q, E, f, G, h, tol, fixed) -> Optional[np.ndarray]:
    d = q.size
    Qoff = Q - np.diag(np.diag(Q))
    negQ = np.minimum(Qoff, 0.0)
    E = np.zeros((0, d)) if E is None else E
    G = np.zeros((0, d)) if G is None else G
    f = np.zeros(0) if f is None else f
    h = np.zeros(0) if h is None else h
    # suffix ranges of row activities over the still-free variables
    def suffix(M, fn):
        out = np.zeros((M.shape[0], d + 1))
        for i in range(d - 1, -1, -1):
            out[:, i] = out[:, i + 1] + fn(M[:, i], 0.0)
        return out
    Emin, Emax = suffix(E, np.minimum), suffix(E, np.maximum)
    Gmin = suffix(G, np.minimum)
    e_tol = tol * (1.0 + np.abs(f))
    g_tol = tol * (1.0 + np.abs(h))

    best_x = None
    best_val = math.inf
    x = np.zeros(d)

    def lower_bound(k: int, val: float, lin: np.ndarray) -> float:
        if k == d:
            return val
        free = slice(k, d)
        pair = 0.5 * negQ[free, free].sum(axis=1)
        return val + float(np.minimum(0.0, lin[free] + 0.5 * np.diag(Q)[free] + pair).sum())

    def dfs(k: int, val: float, lin: np.ndarray, e_act: np.ndarray, g_act: np.ndarray):
        nonlocal best_x, best_val
        # reachability of every row by the free tail
        if E.shape[0]:
            lo = e_act + Emin[:, k]
            hi = e_act + Emax[:, k]
            if np.any(lo > f + e_tol) or np.any(hi < f - e_tol):
                return
        if G.shape[0] and np.any(g_act + Gmin[:, k] > h + g_tol):
            return
        if lower_bound(k, val, lin) >= best_val - 1e-9 * (1.0 + abs(best_val)):
            return
        if k == d:
            best_val, best_x = val, x.copy()
            return
        choices = (fixed[k],) if fixed is not None and fixed[k] >= 0 else (0.0, 1.0)
        for v in choices:
            x[k] = v
            if v:
                nval = val + 0.5 * Q[k, k] + lin[k]
                nlin = lin + Qoff[:, k]
                dfs(k + 1, nval, nlin, e_act + E[:, k], g_act + G[:, k])
            else:
                dfs(k + 1, val, lin, e_act, g_act)
        x[k] = 0.0

    dfs(0, 0.0, q.copy(), np.zeros(E.shape[0]), np.zeros(G.shape[0]))
    return best_x


def exact_binary_subsolve(Q: np.ndarray, q: np.ndarray, E=None, f=None, G=None, h=None,
                          lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
                          enum_cap: int = ENUM_CAP, bb_cap: int = BB_CAP,
                          tol: float = 1e-9) -> Optional[np.ndarray]:
    """Global minimizer of ``1/2 x^T Q x + q^T x`` over ``{0,1}^d`` with linear side constraints.

    Enumerates up to ``enum_cap`` variables and runs branch-and-bound up to
    ``bb_cap``; ties go to the lexicographically smallest point.  ``lb``/``ub``
    may fix variables at 0 or 1.  Returns None if the block is infeasible.

    Examples
    --------
    >>> exact_binary_subsolve(np.array([[2.0]]), np.array([-3.0]))
    array([1.])
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    q = np.asarray(q, dtype=float).reshape(-1)
    d = q.size
    if d > bb_cap:
        raise ValueError(f"block of {d} binaries exceeds the exact cap {bb_cap}")
    lo = np.zeros(d) if lb is None else np.maximum(0.0, np.ceil(np.asarray(lb, dtype=float) - 1e-9))
    hi = np.ones(d) if ub is None else np.minimum(1.0, np.floor(np.asarray(ub, dtype=float) + 1e-9))
    if np.any(lo > hi):
        return None
    E = None if E is None else np.atleast_2d(np.asarray(E, dtype=float))
    G = None if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    f = None if f is None else np.asarray(f, dtype=float).reshape(-1)
    h = None if h is None else np.asarray(h, dtype=float).reshape(-1)
    if d <= enum_cap:
        domains = [(0.0,) if hi[i] == 0 else (1.0,) if lo[i] == 1 else (0.0, 1.0) for i in range(d)]
        return exact_discrete_subsolve(Q, q, domains, E, f, G, h, tol)
    fixed = np.where(lo == hi, lo, -1.0)
    return _bb_binary(Q, q, E, f, G, h, tol, fixed)


# --------------------------------------------------------------------------
# perturbation


def sample_perturb_count(rng: np.random.Generator, lam: float, np_min: int, np_max: int) -> int:
    """Integer draw from an exponential with mean ``lam`` truncated to ``[np_min, np_max]``.

    Inverse CDF on ``[np_min, np_max + 1)``, floored.
    """
    if np_max < np_min:
        raise ValueError("np_max < np_min")
    width = np_max + 1 - np_min
    u = rng.random()
    t = np_min - lam * math.log1p(-u * (1.0 - math.exp(-width / lam)))
    return int(min(max(math.floor(t), np_min), np_max))


def _qap_row_swap(x: np.ndarray, atom: np.ndarray, rng: np.random.Generator) -> None:
    vals = x[atom]
    ones = np.flatnonzero(vals > 0.5)
    if ones.size == 1 and atom.size > 1:
        cur = ones[0]
        new = rng.choice(np.delete(np.arange(atom.size), cur))
        x[atom[cur]] = 0.0
        x[atom[new]] = 1.0
    else:
        k = rng.integers(1, atom.size + 1)
        pick = rng.choice(atom.size, size=k, replace=False)
        x[atom[pick]] = 1.0 - x[atom[pick]]


def perturb(x_best: np.ndarray, kind: str, rng: np.random.Generator, n_p: Optional[int] = None,
            options: Optional[MipOptions] = None, problem: Optional[Lcqp] = None,
            supers: Optional[Sequence[Sequence[int]]] = None,
            indices: Optional[Sequence[int]] = None) -> tuple[np.ndarray, int]:
    """New starting point from ``x_best``; returns it with the number of atoms changed.

    ``bit_flip`` negates binaries, ``reassign`` draws new in-bound values,
    ``swap_balanced`` flips equal numbers of ones and zeros (keeping
    ``e^T x``), ``qap_super_swap`` moves the single 1 of each chosen
    super-variable.  ``indices`` bypasses the random choice of atoms.
    """
    x = np.array(x_best, dtype=float)
    n = x.size
    options = MipOptions() if options is None else options
    if kind == "qap_super_swap":
        if not supers:
            raise ValueError("qap_super_swap needs super-variables")
        atoms = [np.asarray(s, dtype=np.intp) for s in supers]
    else:
        atoms = None
    count = len(atoms) if atoms is not None else n

    def draw_count(limit: int) -> int:
        if n_p is not None:
            return int(min(n_p, limit))
        lo = min(options.np_min, limit)
        hi = min(options.np_max if options.np_max is not None else limit, limit)
        lam = options.lam if options.lam is not None else 0.4 * limit
        return sample_perturb_count(rng, lam, lo, max(lo, hi))

    if kind == "qap_super_swap":
        chosen = np.asarray(indices, dtype=np.intp) if indices is not None else \
            rng.choice(count, size=draw_count(count), replace=False)
        for a in chosen:
            _qap_row_swap(x, atoms[a], rng)
        return x, int(len(chosen))

    if kind == "swap_balanced":
        ones = np.flatnonzero(x > 0.5)
        zeros = np.flatnonzero(x <= 0.5)
        if indices is not None:
            chosen = np.asarray(indices, dtype=np.intp)
            if np.sum(x[chosen] > 0.5) * 2 != chosen.size:
                raise ValueError("swap_balanced indices must hold equally many ones and zeros")
        else:
            k = max(1, draw_count(n) // 2)
            k = min(k, ones.size, zeros.size)
            if k == 0:
                return x, 0
            chosen = np.concatenate([rng.choice(ones, k, replace=False), rng.choice(zeros, k, replace=False)])
        x[chosen] = 1.0 - x[chosen]
        return x, int(chosen.size)

    chosen = np.asarray(indices, dtype=np.intp) if indices is not None else \
        rng.choice(n, size=draw_count(n), replace=False)
    if kind == "bit_flip":
        x[chosen] = 1.0 - x[chosen]
    elif kind == "reassign":
        lb = problem.lb if problem is not None else np.zeros(n)
        ub = problem.ub if problem is not None else np.ones(n)
        kinds = problem.kinds if problem is not None else (VarKind.BINARY,) * n
        for i in chosen:
            if kinds[i] == VarKind.CONTINUOUS:
                if np.isfinite(lb[i]) and np.isfinite(ub[i]):
                    x[i] = rng.uniform(lb[i], ub[i])
                else:
                    x[i] = min(max(x[i] + rng.normal(), lb[i]), ub[i])
            else:
                lo = lb[i] if np.isfinite(lb[i]) else x[i] - 5
                hi = ub[i] if np.isfinite(ub[i]) else x[i] + 5
                options_ = [v for v in range(int(math.ceil(lo)), int(math.floor(hi)) + 1) if v != x[i]]
                if options_:
                    x[i] = float(rng.choice(options_))
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return x, int(len(chosen))


# --------------------------------------------------------------------------
# driver


def _row_is_cardinality(problem: Lcqp, row: int) -> bool:
    a = problem.A_eq[row].toarray().ravel()
    return bool(np.all((a == 0) | (a == 1)))


def initial_point(problem: Lcqp, rng: np.random.Generator, mode: str = "auto",
                  supers: Optional[Sequence[Sequence[int]]] = None,
                  card_rows: Sequence[int] = ()) -> np.ndarray:
    """Starting point: random permutation rows for assignment structure, a random
    point on cardinality rows, else ``max(0, lb)`` clipped to ``ub``."""
    x = np.minimum(np.maximum(0.0, problem.lb), problem.ub)
    if mode == "zero":
        return x
    if mode not in ("auto", "random"):
        raise ValueError(f"unknown initial point rule {mode!r}")
    if problem.meta.get("generator") == "qap" and supers:
        r = len(supers)
        perm = rng.permutation(r)
        x = np.zeros(problem.n)
        for i, s in enumerate(supers):
            x[s[perm[i]]] = 1.0
        return x
    for row in card_rows:
        a = problem.A_eq[row].toarray().ravel()
        support = np.flatnonzero(a)
        k = int(round(problem.b_eq[row]))
        if 0 <= k <= support.size:
            x[support] = 0.0
            x[rng.choice(support, size=k, replace=False)] = 1.0
    return x


def _default_kind(problem: Lcqp, supers, aux_rows) -> str:
    if problem.meta.get("generator") == "qap" and supers:
        return "qap_super_swap"
    if aux_rows:
        return "swap_balanced"
    if all(k == VarKind.BINARY for k in problem.kinds):
        return "bit_flip"
    return "reassign"


class _MipBlocks:
    """Block solves with exact discrete sub-problems on top of a :class:`Workspace`."""

    def __init__(self, ws: Workspace, problem: Lcqp, aux_rows: np.ndarray, options: MipOptions):
        self.ws = ws
        self.problem = problem
        self.aux = aux_rows
        self.A_aux = sp.csr_matrix(problem.A_eq[aux_rows]) if aux_rows.size else None
        self.A_aux_csc = self.A_aux.tocsc() if self.A_aux is not None else None
        self.discrete = np.array([k != VarKind.CONTINUOUS for k in problem.kinds])
        self.options = options
        self.failures = 0
        self.plain_local = np.array([i for i, r in enumerate(ws.leq) if r not in set(aux_rows.tolist())],
                                    dtype=np.intp)

    def step(self, w: np.ndarray) -> None:
        ws = self.ws
        st = ws.state
        pr = self.problem
        if not np.any(self.discrete[w]) and not self.aux.size:
            ws.apply(w, ws.block_step(w))
            return
        x = st.x
        Q = ws.block_matrix(w)
        Q = Q.toarray() if sp.issparse(Q) else np.asarray(Q)
        g = ws.block_gradient(w)
        q = g - Q @ x[w]
        # local rows (absolute form in x_w)
        Le = ws.Le[self.plain_local]
        bLe = ws.bLe[self.plain_local]
        rows = np.unique(sp.csc_matrix(Le)[:, w].indices) if Le.shape[0] else np.zeros(0, dtype=int)
        E = Le[rows][:, w].toarray()
        f = bLe[rows] - (np.asarray(Le[rows] @ x).ravel() - E @ x[w])
        rows_i = np.unique(ws.Li_csc[:, w].indices) if ws.Li.shape[0] else np.zeros(0, dtype=int)
        G = ws.Li[rows_i][:, w].toarray()
        h = ws.bLi[rows_i] - (np.asarray(ws.Li[rows_i] @ x).ravel() - G @ x[w])
        k_aux = 0
        if self.A_aux is not None:
            arows = np.unique(self.A_aux_csc[:, w].indices)
            k_aux = arows.size
            if k_aux:
                Aw = self.A_aux[arows][:, w].toarray()
                fa = pr.b_eq[self.aux[arows]] - (np.asarray(self.A_aux[arows] @ x).ravel() - Aw @ x[w])
                d = w.size
                Qx = np.zeros((d + k_aux, d + k_aux))
                Qx[:d, :d] = Q
                Qx[d:, d:] = ws.beta * np.eye(k_aux)
                Q = Qx
                q = np.concatenate([q, -st.y_eq[self.aux[arows]]])
                E = np.vstack([np.hstack([E, np.zeros((E.shape[0], k_aux))]),
                               np.hstack([Aw, -np.eye(k_aux)])])
                f = np.concatenate([f, fa])
                G = np.hstack([G, np.zeros((G.shape[0], k_aux))])
        lb = np.concatenate([pr.lb[w], np.zeros(k_aux)])
        ub = np.concatenate([pr.ub[w], np.ones(k_aux)])
        disc = np.concatenate([self.discrete[w], np.ones(k_aux, dtype=bool)])
        sol = self._solve(Q, q, E, f, G, h, lb, ub, disc, [pr.kinds[i] for i in w] + [VarKind.BINARY] * k_aux)
        if sol is None:
            self.failures += 1
            return
        ws.apply(w, sol[:w.size] - x[w])

    def _solve(self, Q, q, E, f, G, h, lb, ub, disc, kinds):
        opts = self.options
        if np.all(disc) and all(k == VarKind.BINARY for k in kinds):
            return exact_binary_subsolve(Q, q, E, f, G, h, lb, ub, opts.enum_cap, opts.bb_cap)
        domains = []
        for i in np.flatnonzero(disc):
            lo, hi = lb[i], ub[i]
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ProblemError("integer variables need finite bounds for the exact block solver")
            domains.append(tuple(float(v) for v in range(int(math.ceil(lo)), int(math.floor(hi)) + 1)))
        if np.all(disc):
            return exact_discrete_subsolve(Q, q, domains, E, f, G, h, cap=1 << opts.enum_cap)
        return _mixed_subsolve(Q, q, E, f, G, h, lb, ub, disc, domains)


def _mixed_subsolve(Q, q, E, f, G, h, lb, ub, disc, domains):
    di = np.flatnonzero(disc)
    ci = np.flatnonzero(~disc)
    total = math.prod(len(d) for d in domains)
    if total > MIXED_STATE_CAP:
        raise ValueError(f"{total} discrete states exceed the mixed-block cap {MIXED_STATE_CAP}")
    Qcc = Q[np.ix_(ci, ci)]
    Gc_bounds, hc_bounds = [], []
    eye = np.eye(ci.size)
    for j, i in enumerate(ci):
        if np.isfinite(lb[i]):
            Gc_bounds.append(-eye[j])
            hc_bounds.append(-lb[i])
        if np.isfinite(ub[i]):
            Gc_bounds.append(eye[j])
            hc_bounds.append(ub[i])
    best, best_val = None, math.inf
    for vals in itertools.product(*domains):
        xd = np.array(vals, dtype=float)
        qc = q[ci] + Q[np.ix_(ci, di)] @ xd
        const = 0.5 * xd @ Q[np.ix_(di, di)] @ xd + q[di] @ xd
        Ec, fc = E[:, ci], f - E[:, di] @ xd
        Gc = np.vstack([G[:, ci]] + ([np.array(Gc_bounds)] if Gc_bounds else []))
        hc = np.concatenate([h - G[:, di] @ xd, np.array(hc_bounds)])
        res = solve_qp(Qcc, qc, Ec, fc, Gc, hc)
        if res.status != "optimal":
            continue
        val = const + 0.5 * res.x @ Qcc @ res.x + qc @ res.x
        if val < best_val - 1e-9 * (1.0 + abs(best_val)):
            best_val = val
            best = np.zeros(q.size)
            best[di] = xd
            best[ci] = res.x
    return best


def _default_mip_p(problem: Lcqp, n_atoms: int) -> int:
    r = problem.meta.get("r") if problem.meta.get("generator") == "qap" else None
    if r:
        return max(1, math.ceil(r / 2))
    return max(1, min(n_atoms, math.ceil(problem.n / 10)))


def solve_mip(problem: Lcqp, options: Optional[SolverOptions] = None,
              mip: Optional[MipOptions] = None) -> MipResult:
    """Solve-perturb-solve search for the best feasible point.

    RAC sweeps use exact discrete block solves with bounds (and designated
    rows) enforced inside the blocks.  Assignment problems built by the QAP
    generator bring their super-variables and local rows along; max-bisection
    treats its balance row with a per-block binary surplus variable.  Without
    ``options`` the generator's suggested ``beta`` and ``p`` are used.
    """
    if options is None:
        meta0 = problem.meta or {}
        options = SolverOptions(beta=meta0.get("suggested_beta", 1.0), p=meta0.get("suggested_p"))
    mip = MipOptions() if mip is None else mip
    if problem.is_continuous:
        raise ProblemError("solve_mip needs at least one integer or binary variable")
    n = problem.n
    meta = problem.meta or {}

    supers = None
    if isinstance(options.grouping, SuperVariableSet):
        supers = options.grouping
    elif isinstance(options.grouping, (list, tuple)):
        supers = SuperVariableSet.from_lists(options.grouping)
    elif options.grouping is None and meta.get("super_variables"):
        supers = SuperVariableSet.from_lists(meta["super_variables"])
    local_eq = list(options.local_eq_rows) if options.local_eq_rows is not None else \
        list(meta.get("local_eq_rows", []))
    aux = list(mip.aux_eq_rows) if mip.aux_eq_rows is not None else list(meta.get("aux_eq_rows", []))
    aux_rows = np.array(sorted(set(aux)), dtype=np.intp)
    local_all = sorted(set(local_eq) | set(aux))

    n_atoms = len(supers.atoms(n)) if supers is not None else n
    p = options.p if options.p is not None else _default_mip_p(problem, n_atoms)
    if p > n_atoms:
        raise ValueError(f"p={p} exceeds the number of assignable units ({n_atoms})")
    beta = options.beta
    rng = np.random.default_rng(options.seed)
    super_lists = [s.tolist() for s in supers.supers] if supers is not None else None
    card_rows = [int(r) for r in aux_rows if _row_is_cardinality(problem, int(r))]
    if options.x0 is not None:
        x0 = np.asarray(options.x0, dtype=float)
    else:
        x0 = initial_point(problem, rng, mip.init, super_lists, card_rows)
    kind = mip.kind if mip.kind != "auto" else _default_kind(problem, super_lists, card_rows)

    state = SolverState.initial(problem, x0)
    ws = Workspace(problem, state, beta, local_eq_rows=local_all, local_ineq_rows=options.local_ineq_rows,
                   local_bounds=True)
    blocks = _MipBlocks(ws, problem, aux_rows, mip)
    n_trial = mip.trials_before_perturb(n)

    best = BestSolution()
    events: list[dict] = []
    t0 = time.perf_counter()
    no_improve_hits = 0
    perturbations = 0
    since_improve = 0
    stop = "iter_limit"
    it = 0
    for it in range(1, mip.max_iter + 1):
        part = random_partition(n, p, rng, supers)
        for w in part.groups:
            blocks.step(w)
        ws.update_slack()
        ws.update_split()
        ws.update_duals()
        if aux_rows.size:
            st = state
            st.y_eq[aux_rows] -= beta * (problem.A_eq[aux_rows] @ st.x - problem.b_eq[aux_rows])
        state.iteration = it
        elapsed = time.perf_counter() - t0
        state.elapsed = elapsed

        if feasibility(problem, state.x, mip.feas_eps):
            obj = problem.objective(state.x)
            if obj < best.objective - 1e-12 * (1.0 + abs(obj)):
                best = BestSolution(x=state.x.copy(), objective=obj, feasible=True, found_at=elapsed, iteration=it)
                events.append({"time": elapsed, "objective": obj, "iteration": it})
                no_improve_hits = 0
                since_improve = 0
            else:
                no_improve_hits += 1
            if mip.target is not None and best.feasible and best.objective <= mip.target:
                stop = "target"
                break
            if no_improve_hits >= n_trial and best.feasible:
                state.x[:] = perturb(best.x, kind, rng, options=mip, problem=problem, supers=super_lists)[0]
                state.x_tilde = state.x.copy()
                ws.refresh()
                perturbations += 1
                since_improve += 1
                no_improve_hits = 0
                if mip.max_no_improve is not None and since_improve > mip.max_no_improve:
                    stop = "no_improve"
                    break
        if mip.max_time is not None and elapsed >= mip.max_time:
            stop = "time_limit"
            break
        if not np.all(np.isfinite(state.x)):
            stop = "diverged"
            break

    status = {"time_limit": Status.TIME_LIMIT, "diverged": Status.DIVERGED}.get(stop, Status.ITER_LIMIT)
    result = _finish(problem, state, status, ws.residuals(), [], {}, ws)
    diag = {"p": p, "beta": beta, "kind": kind, "n_trial": n_trial, "aux_rows": aux_rows.tolist(),
            "local_eq_rows": local_eq, "block_failures": blocks.failures}
    return MipResult(best=best, result=result, stop_reason=stop, iterations=it, perturbations=perturbations,
                     events=events, diagnostics=diag)
