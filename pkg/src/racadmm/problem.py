"""LCQP data model, Matrix Market / JSON manifest I/O, row scaling and validation.

The problem solved everywhere in the package is::

    min  1/2 x^T H x + c^T x + c0
    s.t. A_eq x   = b_eq
         A_ineq x <= b_ineq
         lb <= x <= ub,  x_i binary / integer where requested
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "VarKind",
    "ProblemError",
    "MatrixMarketError",
    "Lcqp",
    "RowScaling",
    "Diagnostic",
    "load_matrix_market",
    "save_matrix_market",
    "load_problem",
    "save_problem",
    "row_scale",
    "validate",
    "SYMMETRY_TOL",
]

SYMMETRY_TOL = 1e-10
EIGEN_CHECK_LIMIT = 500

MatrixLike = Union[np.ndarray, sp.spmatrix, sp.sparray, Sequence[Sequence[float]]]


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class ProblemError(ValueError):
    """Invalid problem data (dimension mismatch, asymmetric H, bad manifest)."""


class MatrixMarketError(ProblemError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


def _csr(M: Optional[MatrixLike], shape: tuple[int, int]) -> sp.csr_matrix:
    if M is None:
        return sp.csr_matrix(shape)
    if sp.issparse(M):
        out = sp.csr_matrix(M, dtype=float)
    else:
        arr = np.asarray(M, dtype=float)
        if arr.size == 0:
            arr = arr.reshape(shape)
        out = sp.csr_matrix(arr)
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


def _vec(v: Any, n: int, fill: float = 0.0) -> np.ndarray:
    if v is None:
        return np.full(n, fill, dtype=float)
    arr = np.asarray(v, dtype=float).reshape(-1)
    return arr


@dataclass(frozen=True, eq=False)
class Lcqp:
    """Linearly constrained (mixed-integer) quadratic program.

    Matrices are held as CSR; vectors as float arrays.  Construction only
    normalizes types and checks shapes; semantic checks live in
    :func:`validate`.  Binary variables have their bounds clipped to [0, 1].
    """

    H: sp.csr_matrix
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ineq: sp.csr_matrix
    b_ineq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    kinds: tuple[VarKind, ...]
    c0: float = 0.0
    name: str = ""
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        H: Optional[MatrixLike] = None,
        c: Optional[Iterable[float]] = None,
        A_eq: Optional[MatrixLike] = None,
        b_eq: Optional[Iterable[float]] = None,
        A_ineq: Optional[MatrixLike] = None,
        b_ineq: Optional[Iterable[float]] = None,
        lb: Optional[Iterable[float]] = None,
        ub: Optional[Iterable[float]] = None,
        kinds: Union[None, str, VarKind, Sequence[Union[str, VarKind]]] = None,
        c0: float = 0.0,
        name: str = "",
        n: Optional[int] = None,
        meta: Optional[dict] = None,
    ) -> "Lcqp":
        if n is None:
            if H is not None:
                n = np.shape(H)[1] if sp.issparse(H) else np.asarray(H).shape[1]
            elif c is not None:
                n = len(np.asarray(c).reshape(-1))
            else:
                raise ProblemError("cannot infer the number of variables")
        Hm = _csr(H, (n, n))
        cv = _vec(c, n)
        me = 0 if A_eq is None else np.shape(A_eq)[0]
        mi = 0 if A_ineq is None else np.shape(A_ineq)[0]
        Ae = _csr(A_eq, (me, n))
        Ai = _csr(A_ineq, (mi, n))
        be = _vec(b_eq, me)
        bi = _vec(b_ineq, mi)
        lo = _vec(lb, n, -np.inf)
        hi = _vec(ub, n, np.inf)

        if kinds is None:
            kt = (VarKind.CONTINUOUS,) * n
        elif isinstance(kinds, (str, VarKind)):
            kt = (VarKind(kinds),) * n
        else:
            kt = tuple(VarKind(k) for k in kinds)

        _check_shapes(n, Hm, cv, Ae, be, Ai, bi, lo, hi, kt)
        lo = lo.copy()
        hi = hi.copy()
        for i, k in enumerate(kt):
            if k is VarKind.BINARY:
                lo[i] = max(lo[i], 0.0)
                hi[i] = min(hi[i], 1.0)
        for arr in (cv, be, bi, lo, hi):
            arr.setflags(write=False)
        return cls(
            H=Hm, c=cv, A_eq=Ae, b_eq=be, A_ineq=Ai, b_ineq=bi, lb=lo, ub=hi,
            kinds=kt, c0=float(c0), name=name, meta=dict(meta or {}),
        )

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def m_ineq(self) -> int:
        return self.A_ineq.shape[0]

    @property
    def is_continuous(self) -> bool:
        return all(k is VarKind.CONTINUOUS for k in self.kinds)

    @property
    def integer_mask(self) -> np.ndarray:
        return np.array([k is not VarKind.CONTINUOUS for k in self.kinds], dtype=bool)

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.H @ x) + self.c @ x + self.c0)

    def with_(self, **changes: Any) -> "Lcqp":
        return replace(self, **changes)


def _check_shapes(n, H, c, Ae, be, Ai, bi, lb, ub, kinds) -> None:
    if H.shape != (n, n):
        raise ProblemError(f"H must be {n}x{n}, got {H.shape}")
    if c.shape != (n,):
        raise ProblemError(f"c must have length {n}, got {c.shape[0]}")
    if Ae.shape[1] != n:
        raise ProblemError(f"A_eq must have {n} columns, got {Ae.shape[1]}")
    if be.shape != (Ae.shape[0],):
        raise ProblemError(f"b_eq has length {be.shape[0]} but A_eq has {Ae.shape[0]} rows")
    if Ai.shape[1] != n:
        raise ProblemError(f"A_ineq must have {n} columns, got {Ai.shape[1]}")
    if bi.shape != (Ai.shape[0],):
        raise ProblemError(f"b_ineq has length {bi.shape[0]} but A_ineq has {Ai.shape[0]} rows")
    if lb.shape != (n,) or ub.shape != (n,):
        raise ProblemError(f"bounds must have length {n}")
    if len(kinds) != n:
        raise ProblemError(f"kinds must have length {n}, got {len(kinds)}")


# --------------------------------------------------------------------------
# Matrix Market


def load_matrix_market(path: Union[str, os.PathLike]) -> sp.csr_matrix:
    """Read a Matrix Market ``coordinate`` or ``array`` file.

    Symmetric and skew-symmetric storage is expanded; duplicate coordinate
    entries are summed.  Errors carry the offending line number.
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", path, 1)
    header = lines[0].strip().split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
        raise MatrixMarketError("missing '%%MatrixMarket matrix' header", path, 1)
    fmt, field_, symm = (h.lower() for h in header[2:])
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", path, 1)
    if field_ not in ("real", "integer", "pattern", "double"):
        raise MatrixMarketError(f"unsupported field {field_!r}", path, 1)
    if symm not in ("general", "symmetric", "skew-symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {symm!r}", path, 1)
    if fmt == "array" and field_ == "pattern":
        raise MatrixMarketError("pattern field is only valid for coordinate format", path, 1)

    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines[1:], start=1)]
    body = [(no, ln) for no, ln in body if ln and not ln.startswith("%")]
    if not body:
        raise MatrixMarketError("missing size line", path, len(lines))
    size_no, size_ln = body[0]
    try:
        dims = [int(t) for t in size_ln.split()]
    except ValueError:
        raise MatrixMarketError(f"bad size line {size_ln!r}", path, size_no) from None

    if fmt == "coordinate":
        if len(dims) != 3:
            raise MatrixMarketError("coordinate size line needs 'rows cols nnz'", path, size_no)
        nrows, ncols, nnz = dims
        if symm != "general" and nrows != ncols:
            raise MatrixMarketError("symmetric storage requires a square matrix", path, size_no)
        entries = body[1:]
        if len(entries) != nnz:
            line = entries[-1][0] if entries else size_no
            raise MatrixMarketError(f"declared {nnz} entries, found {len(entries)}", path, line)
        rows, cols, vals = [], [], []
        for no, ln in entries:
            tok = ln.split()
            want = 2 if field_ == "pattern" else 3
            if len(tok) != want:
                raise MatrixMarketError(f"expected {want} fields, got {len(tok)}", path, no)
            try:
                i, j = int(tok[0]) - 1, int(tok[1]) - 1
                v = 1.0 if field_ == "pattern" else _parse_float(tok[2])
            except ValueError:
                raise MatrixMarketError(f"cannot parse entry {ln!r}", path, no) from None
            if not (0 <= i < nrows and 0 <= j < ncols):
                raise MatrixMarketError(
                    f"index ({i + 1},{j + 1}) outside declared {nrows}x{ncols}", path, no
                )
            if symm != "general" and j > i:
                raise MatrixMarketError("symmetric storage must use the lower triangle", path, no)
            if symm == "skew-symmetric" and i == j:
                raise MatrixMarketError("skew-symmetric storage cannot hold diagonal entries", path, no)
            rows.append(i)
            cols.append(j)
            vals.append(v)
            if symm != "general" and i != j:
                rows.append(j)
                cols.append(i)
                vals.append(-v if symm == "skew-symmetric" else v)
        M = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
        M.sum_duplicates()
        return M

    if len(dims) != 2:
        raise MatrixMarketError("array size line needs 'rows cols'", path, size_no)
    nrows, ncols = dims
    if symm == "general":
        slots = [(i, j) for j in range(ncols) for i in range(nrows)]
    else:
        if nrows != ncols:
            raise MatrixMarketError("symmetric storage requires a square matrix", path, size_no)
        start = 0 if symm == "symmetric" else 1
        slots = [(i, j) for j in range(ncols) for i in range(j + start, nrows)]
    entries = body[1:]
    if len(entries) != len(slots):
        line = entries[-1][0] if entries else size_no
        raise MatrixMarketError(f"expected {len(slots)} values, found {len(entries)}", path, line)
    dense = np.zeros((nrows, ncols))
    for (i, j), (no, ln) in zip(slots, entries):
        tok = ln.split()
        if len(tok) != 1:
            raise MatrixMarketError("array entries hold one value per line", path, no)
        try:
            v = _parse_float(tok[0])
        except ValueError:
            raise MatrixMarketError(f"cannot parse value {ln!r}", path, no) from None
        dense[i, j] = v
        if symm != "general" and i != j:
            dense[j, i] = -v if symm == "skew-symmetric" else v
    return sp.csr_matrix(dense)


def _parse_float(tok: str) -> float:
    v = float(tok)
    return v


def save_matrix_market(path: Union[str, os.PathLike], M: MatrixLike, symmetric: bool = False) -> None:
    """Write ``M`` as a real coordinate file; floats use ``repr`` so values round-trip exactly."""
    M = sp.coo_matrix(M if sp.issparse(M) else np.atleast_2d(np.asarray(M, dtype=float)))
    M.sum_duplicates()
    if symmetric:
        keep = M.row >= M.col
        r, c, v = M.row[keep], M.col[keep], M.data[keep]
    else:
        r, c, v = M.row, M.col, M.data
    order = np.lexsort((r, c))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {'symmetric' if symmetric else 'general'}\n")
        fh.write(f"{M.shape[0]} {M.shape[1]} {len(v)}\n")
        for k in order:
            fh.write(f"{r[k] + 1} {c[k] + 1} {float(v[k])!r}\n")


# --------------------------------------------------------------------------
# JSON manifest

_MANIFEST_KEYS = {"name", "H", "c", "A_eq", "b_eq", "A_ineq", "b_ineq", "lb", "ub", "kinds", "c0", "meta"}


def _decode_number(v: Any) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s in ("-inf", "-infinity"):
            return -math.inf
        raise ProblemError(f"cannot interpret {v!r} as a number")
    if v is None:
        raise ProblemError("null is not a valid number")
    return float(v)


def _encode_number(v: float) -> Union[float, str]:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def _load_matrix_field(value: Any, base: Path, key: str) -> Optional[sp.csr_matrix]:
    if value is None:
        return None
    if isinstance(value, str):
        p = base / value
        if not p.exists():
            raise ProblemError(f"{key}: file {p} does not exist")
        return load_matrix_market(p)
    if isinstance(value, list):
        rows = [[_decode_number(x) for x in row] for row in value]
        return sp.csr_matrix(np.array(rows, dtype=float)) if rows else None
    raise ProblemError(f"{key}: expected a file path or a nested list")


def _load_vector_field(value: Any, base: Path, key: str) -> Optional[np.ndarray]:
    if value is None:
        return None
    if isinstance(value, str):
        p = base / value
        if not p.exists():
            raise ProblemError(f"{key}: file {p} does not exist")
        M = load_matrix_market(p)
        if M.shape[1] != 1:
            raise ProblemError(f"{key}: vector file must have a single column, got {M.shape[1]}")
        return M.toarray().reshape(-1)
    if isinstance(value, list):
        return np.array([_decode_number(x) for x in value], dtype=float)
    if isinstance(value, (int, float)):
        return np.array([float(value)])
    raise ProblemError(f"{key}: expected a list or a file path")


def _mirror_triangle(H: sp.csr_matrix) -> sp.csr_matrix:
    """Mirror ``H`` when only one triangle was supplied."""
    coo = H.tocoo()
    off = coo.row != coo.col
    if not off.any():
        return H
    lower = (coo.row > coo.col)[off]
    if lower.all() or (~lower).all():
        mirrored = H + sp.triu(H, 1).T + sp.tril(H, -1).T
        return sp.csr_matrix(mirrored)
    return H


def load_problem(manifest: Union[str, os.PathLike, dict], base_dir: Optional[Union[str, os.PathLike]] = None) -> Lcqp:
    """Build a validated :class:`Lcqp` from a JSON manifest (path or parsed dict).

    Matrix fields are Matrix Market paths (relative to the manifest) or
    nested lists; vectors are inline lists or single-column Matrix Market
    files.  Bounds accept the strings ``"inf"``/``"-inf"``.
    """
    if isinstance(manifest, dict):
        data = manifest
        base = Path(base_dir) if base_dir is not None else Path.cwd()
    else:
        mpath = Path(manifest)
        if not mpath.exists():
            raise ProblemError(f"manifest {mpath} does not exist")
        try:
            data = json.loads(mpath.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ProblemError(f"{mpath}: invalid JSON ({exc})") from exc
        base = Path(base_dir) if base_dir is not None else mpath.parent
    if not isinstance(data, dict):
        raise ProblemError("manifest must be a JSON object")
    unknown = set(data) - _MANIFEST_KEYS
    if unknown:
        raise ProblemError(f"unknown manifest keys: {sorted(unknown)}")

    H = _load_matrix_field(data.get("H"), base, "H")
    c = _load_vector_field(data.get("c"), base, "c")
    if H is None and c is None:
        raise ProblemError("manifest needs at least one of H or c")
    n = H.shape[0] if H is not None else c.shape[0]
    if H is not None:
        if H.shape[0] != H.shape[1]:
            raise ProblemError(f"H must be square, got {H.shape}")
        H = _mirror_triangle(H)

    A_eq = _load_matrix_field(data.get("A_eq"), base, "A_eq")
    A_ineq = _load_matrix_field(data.get("A_ineq"), base, "A_ineq")
    b_eq = _load_vector_field(data.get("b_eq"), base, "b_eq")
    b_ineq = _load_vector_field(data.get("b_ineq"), base, "b_ineq")
    if A_eq is not None and b_eq is None:
        raise ProblemError("A_eq given without b_eq")
    if A_ineq is not None and b_ineq is None:
        raise ProblemError("A_ineq given without b_ineq")
    if A_eq is None and b_eq is not None and b_eq.size:
        raise ProblemError("b_eq given without A_eq")
    if A_ineq is None and b_ineq is not None and b_ineq.size:
        raise ProblemError("b_ineq given without A_ineq")

    kinds = data.get("kinds")
    problem = Lcqp.create(
        H=H, c=c, A_eq=A_eq, b_eq=b_eq, A_ineq=A_ineq, b_ineq=b_ineq,
        lb=_load_vector_field(data.get("lb"), base, "lb"),
        ub=_load_vector_field(data.get("ub"), base, "ub"),
        kinds=kinds, c0=_decode_number(data.get("c0", 0.0)),
        name=str(data.get("name", "")), n=n, meta=data.get("meta") or {},
    )
    errors = [d for d in validate(problem) if d.severity == "error"]
    if errors:
        raise ProblemError("; ".join(d.message for d in errors))
    return problem


def save_problem(problem: Lcqp, directory: Union[str, os.PathLike], stem: str = "problem") -> Path:
    """Write ``problem`` as a manifest plus Matrix Market files; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for key, M, symm in (("H", problem.H, True), ("A_eq", problem.A_eq, False), ("A_ineq", problem.A_ineq, False)):
        if key != "H" and M.shape[0] == 0:
            continue
        fname = f"{stem}_{key}.mtx"
        save_matrix_market(d / fname, M, symmetric=symm)
        files[key] = fname
    manifest = {
        "name": problem.name,
        **files,
        "c": [float(v) for v in problem.c],
        "b_eq": [float(v) for v in problem.b_eq],
        "b_ineq": [float(v) for v in problem.b_ineq],
        "lb": [_encode_number(v) for v in problem.lb],
        "ub": [_encode_number(v) for v in problem.ub],
        "kinds": [k.value for k in problem.kinds],
        "c0": problem.c0,
    }
    if problem.meta:
        manifest["meta"] = problem.meta
    if "A_eq" not in files:
        del manifest["b_eq"]
    if "A_ineq" not in files:
        del manifest["b_ineq"]
    path = d / f"{stem}.json"
    path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# scaling and validation


@dataclass(frozen=True)
class RowScaling:
    """Row factors applied by :func:`row_scale`; scaled row = row / factor."""

    eq: np.ndarray
    ineq: np.ndarray

    def unscale_duals(self, y_eq: np.ndarray, y_ineq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(y_eq) / self.eq, np.asarray(y_ineq) / self.ineq


def _row_factors(A: sp.csr_matrix) -> np.ndarray:
    if A.shape[0] == 0:
        return np.ones(0)
    f = np.asarray(abs(A).max(axis=1).todense()).reshape(-1)
    f[f == 0] = 1.0
    return f


def row_scale(problem: Lcqp) -> tuple[Lcqp, RowScaling]:
    """Divide every nonzero constraint row (and its rhs) by its infinity norm."""
    fe = _row_factors(problem.A_eq)
    fi = _row_factors(problem.A_ineq)
    A_eq = sp.diags(1.0 / fe) @ problem.A_eq if fe.size else problem.A_eq
    A_ineq = sp.diags(1.0 / fi) @ problem.A_ineq if fi.size else problem.A_ineq
    scaled = Lcqp.create(
        H=problem.H, c=problem.c, A_eq=sp.csr_matrix(A_eq), b_eq=problem.b_eq / fe,
        A_ineq=sp.csr_matrix(A_ineq), b_ineq=problem.b_ineq / fi, lb=problem.lb, ub=problem.ub,
        kinds=problem.kinds, c0=problem.c0, name=problem.name, n=problem.n, meta=problem.meta,
    )
    return scaled, RowScaling(eq=fe, ineq=fi)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning" | "info"
    code: str
    message: str
    index: Optional[int] = None


def validate(problem: Lcqp, check_psd: bool = False) -> list[Diagnostic]:
    """Report problems with ``problem``; an empty list means well formed.

    ``check_psd`` adds a minimum-eigenvalue check of H for ``n <= 500``.
    """
    out: list[Diagnostic] = []
    n = problem.n
    for name, v in (("c", problem.c), ("b_eq", problem.b_eq), ("b_ineq", problem.b_ineq)):
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            out.append(Diagnostic("error", "non-finite", f"{name}[{bad[0]}] is not finite", int(bad[0])))
    for name, M in (("H", problem.H), ("A_eq", problem.A_eq), ("A_ineq", problem.A_ineq)):
        if M.nnz and not np.all(np.isfinite(M.data)):
            out.append(Diagnostic("error", "non-finite", f"{name} has non-finite entries"))
    if np.any(np.isnan(problem.lb)) or np.any(np.isnan(problem.ub)):
        out.append(Diagnostic("error", "non-finite", "bounds contain NaN"))
    for i in np.flatnonzero(problem.lb > problem.ub):
        out.append(Diagnostic("error", "bounds", f"lb > ub at index {i}", int(i)))
    for i in np.flatnonzero(problem.lb == np.inf):
        out.append(Diagnostic("error", "bounds", f"lb is +inf at index {i}", int(i)))
    for i in np.flatnonzero(problem.ub == -np.inf):
        out.append(Diagnostic("error", "bounds", f"ub is -inf at index {i}", int(i)))

    defect = problem.H - problem.H.T
    defect_norm = float(abs(defect).max()) if defect.nnz else 0.0
    if defect_norm > SYMMETRY_TOL:
        coo = sp.coo_matrix(defect)
        k = int(np.argmax(np.abs(coo.data)))
        i, j = int(coo.row[k]), int(coo.col[k])
        out.append(Diagnostic(
            "error", "symmetry",
            f"H is not symmetric: |H[{i},{j}] - H[{j},{i}]| = {defect_norm:.3e}", i,
        ))

    for i, k in enumerate(problem.kinds):
        if k is VarKind.INTEGER and (np.isfinite(problem.lb[i]) and problem.lb[i] != math.floor(problem.lb[i])):
            out.append(Diagnostic("warning", "integer-bounds", f"fractional lower bound on integer variable {i}", i))

    if check_psd and n <= EIGEN_CHECK_LIMIT and defect_norm <= SYMMETRY_TOL and n > 0:
        lam = float(np.linalg.eigvalsh(problem.H.toarray()).min())
        scale = max(1.0, float(abs(problem.H).max()) if problem.H.nnz else 1.0)
        if lam < -1e-9 * scale:
            out.append(Diagnostic("warning", "not-psd", f"H has a negative eigenvalue {lam:.3e}"))
        else:
            out.append(Diagnostic("info", "psd", f"min eigenvalue of H is {lam:.3e}"))
    return out
