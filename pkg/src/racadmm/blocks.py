"""Block compositions: random assembly, exhaustive enumeration and structure detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "BlockPartition",
    "SuperVariableSet",
    "random_partition",
    "contiguous_partition",
    "count_partitions",
    "count_update_combinations",
    "enumerate_partitions",
    "detect_structure",
    "ENUMERATION_CAP",
]

ENUMERATION_CAP = 10_000


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Ordered groups of variable indices; the tuple order is the sweep order."""

    groups: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "groups", tuple(np.sort(np.asarray(g, dtype=np.intp)) for g in self.groups)
        )

    @property
    def p(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return int(sum(g.size for g in self.groups))

    def sizes(self) -> list[int]:
        return [int(g.size) for g in self.groups]

    def canonical(self) -> tuple[tuple[int, ...], ...]:
        """Hashable key ignoring sweep order: groups sorted by first element."""
        return tuple(sorted(tuple(int(i) for i in g) for g in self.groups))

    def reordered(self, order: Sequence[int]) -> "BlockPartition":
        order = list(order)
        if sorted(order) != list(range(self.p)):
            raise ValueError(f"{order} is not a permutation of 0..{self.p - 1}")
        return BlockPartition(tuple(self.groups[i] for i in order))

    def is_cover(self, n: int) -> bool:
        allidx = np.concatenate(self.groups) if self.groups else np.zeros(0, dtype=np.intp)
        return allidx.size == n and np.array_equal(np.sort(allidx), np.arange(n))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BlockPartition):
            return NotImplemented
        return self.p == other.p and all(np.array_equal(a, b) for a, b in zip(self.groups, other.groups))

    def __hash__(self) -> int:
        return hash(tuple(tuple(int(i) for i in g) for g in self.groups))

    def to_lists(self) -> list[list[int]]:
        return [[int(i) for i in g] for g in self.groups]


@dataclass(frozen=True, eq=False)
class SuperVariableSet:
    """Index groups that always travel together, plus the freely assigned shared indices.

    ``local_rows`` / ``coupling_rows`` refer to rows of the matrix the set was
    detected from (empty for hand-supplied sets).  ``degenerate`` marks a
    detection that found no usable structure.
    """

    supers: tuple = ()
    shared: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    local_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    coupling_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    degenerate: bool = False

    def __post_init__(self):
        supers = tuple(np.sort(np.asarray(s, dtype=np.intp)) for s in self.supers)
        object.__setattr__(self, "supers", supers)
        for name in ("shared", "local_rows", "coupling_rows"):
            object.__setattr__(self, name, np.sort(np.asarray(getattr(self, name), dtype=np.intp)))
        seen = np.concatenate(supers) if supers else np.zeros(0, dtype=np.intp)
        if np.unique(seen).size != seen.size:
            raise ValueError("super-variables must be disjoint")

    @classmethod
    def from_lists(cls, supers: Sequence[Sequence[int]], n: Optional[int] = None) -> "SuperVariableSet":
        """Supplied groups; with ``n`` given, every other index becomes shared."""
        shared = np.zeros(0, dtype=np.intp)
        if n is not None:
            used = set(int(i) for s in supers for i in s)
            if used and (min(used) < 0 or max(used) >= n):
                raise ValueError("super-variable index out of range")
            shared = np.array(sorted(set(range(n)) - used), dtype=np.intp)
        return cls(supers=tuple(supers), shared=shared)

    def atoms(self, n: int) -> list[np.ndarray]:
        """Super-variables followed by singleton atoms for every remaining index."""
        used = np.zeros(n, dtype=bool)
        out = []
        for s in self.supers:
            if s.size and (s.min() < 0 or s.max() >= n):
                raise ValueError("super-variable index out of range")
            used[s] = True
            out.append(s)
        out.extend(np.array([i], dtype=np.intp) for i in np.flatnonzero(~used))
        return out


def _chunk_sizes(total: int, p: int) -> list[int]:
    s, r = divmod(total, p)
    return [s + 1] * r + [s] * (p - r)


def contiguous_partition(n: int, p: int) -> BlockPartition:
    """Fixed partition into ``p`` consecutive index ranges (sizes differ by at most one)."""
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    bounds = np.cumsum([0] + _chunk_sizes(n, p))
    return BlockPartition(tuple(np.arange(bounds[i], bounds[i + 1]) for i in range(p)))


def random_partition(
    n: int,
    p: int,
    rng: np.random.Generator,
    supers: Optional[SuperVariableSet] = None,
) -> BlockPartition:
    """Uniformly random composition into ``p`` near-equal groups.

    Atoms (super-variables and single indices) are shuffled and dealt in
    consecutive chunks; with plain indices this is uniform over all equal-size
    partitions.  Group sizes count atoms, so super-variables are never split.
    """
    atoms = supers.atoms(n) if supers is not None else None
    count = len(atoms) if atoms is not None else n
    if p < 1:
        raise ValueError("p must be at least 1")
    if p > count:
        raise ValueError(f"p={p} exceeds the number of atoms ({count})")
    perm = rng.permutation(count)
    bounds = np.cumsum([0] + _chunk_sizes(count, p))
    groups = []
    for i in range(p):
        chunk = perm[bounds[i]:bounds[i + 1]]
        if atoms is None:
            groups.append(chunk)
        else:
            groups.append(np.concatenate([atoms[a] for a in chunk]))
    return BlockPartition(tuple(groups))


def count_partitions(n: int, p: int) -> int:
    """Number of ways to split ``n`` indices into ``p`` unlabeled groups of size ``n / p``."""
    if p < 1 or n < 1 or n % p:
        raise ValueError(f"count_partitions needs p | n, got n={n}, p={p}")
    s = n // p
    return math.factorial(n) // (math.factorial(s) ** p * math.factorial(p))


def count_update_combinations(n: int, p: int) -> int:
    """Compositions times block orders."""
    return count_partitions(n, p) * math.factorial(p)


def _partitions(items: tuple[int, ...], s: int) -> Iterator[list[tuple[int, ...]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for others in combinations(rest, s - 1):
        group = (first,) + others
        remaining = tuple(i for i in rest if i not in others)
        for tail in _partitions(remaining, s):
            yield [group] + tail


def enumerate_partitions(n: int, p: int, cap: int = ENUMERATION_CAP) -> list[BlockPartition]:
    """All equal-size compositions in canonical order (groups sorted by first element)."""
    total = count_partitions(n, p)
    if total > cap:
        raise ValueError(f"{total} partitions exceed the enumeration cap {cap}")
    return [BlockPartition(tuple(parts)) for parts in _partitions(tuple(range(n)), n // p)]


# --------------------------------------------------------------------------
# structure detection


def _column_components(A: sp.csc_matrix, rows_alive: np.ndarray, cols_alive: np.ndarray):
    """Components of the column graph (columns linked through shared live rows)."""
    m, n = A.shape
    sub = sp.csr_matrix(A[rows_alive][:, cols_alive])
    k = sub.shape[1]
    if sub.shape[0] == 0 or k == 0:
        return 0, np.full(k, -1), np.zeros(k, dtype=bool)
    pattern = sub.copy()
    pattern.data[:] = 1.0
    C = (pattern.T @ pattern).tocsr()
    touched = np.asarray(pattern.sum(axis=0)).reshape(-1) > 0
    ncomp, labels = connected_components(C, directed=False)
    labels = labels.copy()
    labels[~touched] = -1
    # relabel in order of the lowest column index so results are deterministic
    mapping = {}
    for lab in labels:
        if lab >= 0 and lab not in mapping:
            mapping[lab] = len(mapping)
    labels = np.array([mapping.get(lab, -1) for lab in labels])
    return len(mapping), labels, touched


def detect_structure(A, target_groups: int = 2, max_peel: Optional[float] = 0.5) -> SuperVariableSet:
    """Split the columns of ``A`` into independent groups plus a shared set.

    Rows and columns form a bipartite graph.  Starting from the full graph, the
    vertex of highest degree (columns before rows, lowest index on ties) is
    peeled off until the live rows link the live columns into at least two
    components.  Peeled rows are coupling rows, peeled columns and columns
    touched by no live row are shared.  Components are merged greedily
    (largest first, into the smallest group) down to ``target_groups``.
    When no split is found within ``max_peel`` of the vertices the result is
    one group holding every column, flagged ``degenerate``.
    """
    A = sp.csc_matrix(A)
    m, n = A.shape
    if m == 0 or n == 0:
        raise ValueError("detect_structure needs a nonempty matrix")
    P = A.copy()
    P.data = (P.data != 0).astype(float)
    P.eliminate_zeros()
    Pr = P.tocsr()
    rows_alive = np.ones(m, dtype=bool)
    cols_alive = np.ones(n, dtype=bool)
    budget = int(max_peel * (m + n)) if max_peel is not None else m + n

    peeled = 0
    while True:
        rows_idx = np.flatnonzero(rows_alive)
        cols_idx = np.flatnonzero(cols_alive)
        ncomp, labels, touched = _column_components(P, rows_idx, cols_idx)
        if ncomp >= 2 or peeled >= budget or rows_idx.size == 0:
            break
        rdeg = np.asarray(Pr[rows_idx][:, cols_idx].sum(axis=1)).reshape(-1)
        cdeg = np.asarray(P[rows_idx][:, cols_idx].sum(axis=0)).reshape(-1)
        best_r = int(np.argmax(rdeg)) if rdeg.size else -1
        best_c = int(np.argmax(cdeg)) if cdeg.size else -1
        if best_c >= 0 and (best_r < 0 or cdeg[best_c] >= rdeg[best_r]):
            cols_alive[cols_idx[best_c]] = False
        else:
            rows_alive[rows_idx[best_r]] = False
        peeled += 1

    if ncomp < 2:
        return SuperVariableSet(
            supers=(np.arange(n),), shared=np.zeros(0, dtype=np.intp),
            local_rows=np.arange(m), coupling_rows=np.zeros(0, dtype=np.intp), degenerate=True,
        )

    cols_idx = np.flatnonzero(cols_alive)
    comps = [cols_idx[labels == k] for k in range(ncomp)]
    shared = np.concatenate([np.flatnonzero(~cols_alive), cols_idx[~touched]]).astype(np.intp)

    target = max(1, target_groups)
    if len(comps) > target:
        order = sorted(range(len(comps)), key=lambda k: (-comps[k].size, comps[k][0]))
        bins: list[list[int]] = [[] for _ in range(target)]
        loads = [0] * target
        for k in order:
            j = min(range(target), key=lambda t: (loads[t], t))
            bins[j].extend(comps[k].tolist())
            loads[j] += comps[k].size
        comps = sorted((np.array(sorted(b), dtype=np.intp) for b in bins if b), key=lambda g: g[0])

    owner = np.full(n, -1)
    for k, g in enumerate(comps):
        owner[g] = k
    local, coupling = [], []
    for i in range(m):
        cols = Pr.indices[Pr.indptr[i]:Pr.indptr[i + 1]]
        owners = set(owner[cols].tolist())
        if rows_alive[i] and len(owners) == 1 and -1 not in owners:
            local.append(i)
        else:
            coupling.append(i)
    return SuperVariableSet(
        supers=tuple(comps), shared=shared, local_rows=np.array(local, dtype=np.intp),
        coupling_rows=np.array(coupling, dtype=np.intp), degenerate=False,
    )
