"""Elastic-net regression and kernel C-SVC on top of the block ADMM machinery.

Elastic net splits the coefficients ``beta = z``; the ``beta`` blocks are
least-squares solves and ``z`` has a closed form with soft-thresholding.  The
SVM trains the dual QP with :func:`racadmm.admm.solve` at loose tolerances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from . import linalg
from .admm import AssumptionViolation, Mode, SolverOptions, solve
from .blocks import contiguous_partition, random_partition
from .generators import GaussianKernel, SvmSpec, gen_svm_dual

__all__ = [
    "soft_threshold",
    "update_z",
    "elastic_net_objective",
    "default_gamma",
    "ElasticNetOptions",
    "ElasticNetState",
    "fit_elastic_net",
    "SvmModel",
    "svm_options",
    "train_csvc",
    "decision_function",
    "predict",
    "accuracy",
]

MAX_SVM_POINTS = 5000


def soft_threshold(a, b):
    """``S(a, b) = -sign(a) max(|a| - b, 0)`` (vectorized).

    >>> soft_threshold(2.0, 1.0), soft_threshold(-2.0, 1.0), soft_threshold(1.0, 2.0)
    (-1.0, 1.0, 0.0)
    """
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("threshold must be non-negative")
    a = np.asarray(a, dtype=float)
    out = -np.sign(a) * np.maximum(np.abs(a) - b, 0.0)
    out = out + 0.0  # turn -0.0 into 0.0
    return float(out) if out.ndim == 0 else out


def update_z(beta_next, xi, gamma: float, lam: float, alpha: float):
    """Minimizer of ``(xi - gamma beta)^T z + (gamma + (1 - alpha) lam) / 2 ||z||^2 + lam alpha ||z||_1``."""
    den = (1.0 - alpha) * lam + gamma
    if not den > 0:
        raise ValueError("(1 - alpha) * lambda + gamma must be positive")
    a = np.asarray(xi, dtype=float) - gamma * np.asarray(beta_next, dtype=float)
    return soft_threshold(a, lam * alpha) / den


def elastic_net_objective(X, y, coef, lam: float, alpha: float) -> float:
    """``||y - X b||^2 / (2 n) + lam ((1 - alpha) / 2 ||b||^2 + alpha ||b||_1)``."""
    r = np.asarray(y, dtype=float) - X @ coef
    n = r.size
    return float(r @ r / (2 * n) + lam * (0.5 * (1 - alpha) * coef @ coef + alpha * np.abs(coef).sum()))


def default_gamma(X, lam: float) -> float:
    """``0.1 lam`` for data with fewer than 99.5% zeros, ``lam`` otherwise; 1 when ``lam = 0``."""
    if lam == 0:
        return 1.0
    nnz = X.nnz if sp.issparse(X) else np.count_nonzero(X)
    zeros = 1.0 - nnz / max(1, X.shape[0] * X.shape[1])
    return 0.1 * lam if zeros < 0.995 else lam


@dataclass
class ElasticNetOptions:
    """``max_iter`` with ``tol=None`` runs a fixed number of iterations."""

    block_size: int = 100
    mode: Union[Mode, str] = Mode.RAC
    gamma: Optional[float] = None
    max_iter: int = 1000
    tol: Optional[float] = 1e-8
    seed: int = 0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.mode not in (Mode.RAC, Mode.RP, Mode.CYCLIC):
            raise ValueError("elastic net supports rac, rp and cyclic modes")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")


@dataclass
class ElasticNetState:
    beta: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    gamma: float
    lam: float
    alpha: float
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def coef(self) -> np.ndarray:
        """The split copy ``z`` carries exact zeros."""
        return self.z


def fit_elastic_net(X, y, lam: float, alpha: float, options: Optional[ElasticNetOptions] = None) -> ElasticNetState:
    """Elastic-net fit with multi-block ``beta`` updates and a whole-vector ``z`` step.

    ``history`` records the objective at ``z`` after every iteration.
    """
    options = ElasticNetOptions() if options is None else options
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    Xd = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, d = Xd.shape
    if y.size != n:
        raise ValueError("X and y disagree on the number of observations")
    gamma = default_gamma(Xd, lam) if options.gamma is None else float(options.gamma)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    A = Xd / math.sqrt(n)
    c = -(Xd.T @ y) / n
    p = max(1, math.ceil(d / options.block_size))
    rng = np.random.default_rng(options.seed)
    fixed = contiguous_partition(d, p)
    cache: dict = {}

    beta = np.zeros(d)
    z = np.zeros(d)
    xi = np.zeros(d)
    Ab = A @ beta
    state = ElasticNetState(beta=beta, z=z, xi=xi, gamma=gamma, lam=lam, alpha=alpha)

    def factor(w, key):
        if key is not None and key in cache:
            return cache[key]
        Aw = A[:, w]
        M = Aw.T @ Aw + gamma * np.eye(w.size)
        try:
            f = linalg.cholesky(M)
        except linalg.NotPositiveDefiniteError as exc:
            raise AssumptionViolation(w, f"({exc})") from exc
        if key is not None:
            cache[key] = f
        return f

    for k in range(1, options.max_iter + 1):
        if options.mode is Mode.RAC:
            groups = [(g, None) for g in random_partition(d, p, rng).groups]
        elif options.mode is Mode.RP:
            groups = [(fixed.groups[j], j) for j in rng.permutation(p)]
        else:
            groups = [(g, j) for j, g in enumerate(fixed.groups)]
        for w, key in groups:
            Aw = A[:, w]
            # gradient of the smooth part at the current beta, restricted to w
            grad = Aw.T @ Ab + gamma * beta[w] + c[w] - xi[w] - gamma * z[w]
            delta = -linalg.solve_chol(factor(w, key), grad)
            beta[w] += delta
            Ab += Aw @ delta
        z_old = z.copy()
        z[:] = update_z(beta, xi, gamma, lam, alpha)
        xi -= gamma * (beta - z)
        state.iterations = k
        state.history.append(elastic_net_objective(Xd, y, z, lam, alpha))
        if options.tol is not None:
            r_p = float(np.max(np.abs(beta - z))) if d else 0.0
            r_d = gamma * float(np.max(np.abs(z - z_old))) if d else 0.0
            if max(r_p, r_d) < options.tol:
                break
    return state


# --------------------------------------------------------------------------
# SVM


@dataclass
class SvmModel:
    support: np.ndarray
    coef: np.ndarray
    X_support: np.ndarray
    y_support: np.ndarray
    b: float
    sigma: float
    C: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "support": self.support.tolist(), "coef": self.coef.tolist(),
            "X_support": self.X_support.tolist(), "y_support": self.y_support.tolist(),
            "b": self.b, "sigma": self.sigma, "C": self.C, "meta": self.meta,
        })

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        d = json.loads(text)
        nfeat = len(d["X_support"][0]) if d["X_support"] else 0
        return cls(
            support=np.asarray(d["support"], dtype=np.intp), coef=np.asarray(d["coef"], dtype=float),
            X_support=np.asarray(d["X_support"], dtype=float).reshape(-1, nfeat),
            y_support=np.asarray(d["y_support"], dtype=float), b=float(d["b"]),
            sigma=float(d["sigma"]), C=float(d["C"]), meta=d.get("meta", {}),
        )


def svm_options(n: int, **overrides) -> SolverOptions:
    """Loose settings for the SVM dual: ``eps_prim = 0.1``, ``eps_dual = 1``, 10 iterations, blocks of 100."""
    base = dict(mode=Mode.RAC, p=max(1, math.ceil(n / 100)), eps=0.1, eps_dual=1.0, max_iter=10)
    base.update(overrides)
    return SolverOptions(**base)


def train_csvc(spec: SvmSpec, options: Optional[SolverOptions] = None, support_tol: Optional[float] = None) -> SvmModel:
    """Train a Gaussian-kernel C-SVC by solving its dual.

    ``b = y_i - sum_j y_j z_j K(x_j, x_i)`` averaged over margin vectors
    (``0 < z_i < C``); without margin vectors the average runs over all
    support vectors, and over all points when there are none.
    """
    n = spec.y.size
    if n > MAX_SVM_POINTS:
        raise ValueError(f"{n} points exceed the dense-kernel cap {MAX_SVM_POINTS}")
    problem, kernel = gen_svm_dual(spec)
    options = svm_options(n) if options is None else options
    res = solve(problem, options)
    z = np.clip(res.x, 0.0, spec.C)
    tol = 1e-6 * spec.C if support_tol is None else support_tol
    sv = np.flatnonzero(z > tol)
    margin = sv[z[sv] < spec.C - tol]
    K = kernel(spec.X, spec.X)
    f_no_b = K @ (spec.y * z)
    pool = margin if margin.size else (sv if sv.size else np.arange(n))
    b = float(np.mean(spec.y[pool] - f_no_b[pool]))
    return SvmModel(
        support=sv, coef=z[sv], X_support=spec.X[sv].copy(), y_support=spec.y[sv].copy(), b=b,
        sigma=spec.sigma, C=spec.C,
        meta={"status": res.status.value, "iterations": res.iterations, "margin_vectors": int(margin.size),
              "r_prim": res.internal.r_prim, "r_dual": res.internal.r_dual},
    )


def decision_function(model: SvmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.support.size == 0:
        return np.full(X.shape[0], model.b)
    K = GaussianKernel(model.sigma)(X, model.X_support)
    return K @ (model.y_support * model.coef) + model.b


def predict(model: SvmModel, X) -> np.ndarray:
    """Labels in {-1, +1}; a zero decision value maps to +1.

    Values within rounding noise of zero (relative to the coefficient mass)
    count as zero.
    """
    f = decision_function(model, X)
    tie = 1e-12 * (1.0 + float(np.abs(model.coef).sum()) + abs(model.b))
    return np.where(f >= -tie, 1.0, -1.0)


def accuracy(model: SvmModel, X, y) -> float:
    """Percentage of correctly predicted labels."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        raise ValueError("empty test set")
    return 100.0 * float(np.mean(predict(model, X) == y))
