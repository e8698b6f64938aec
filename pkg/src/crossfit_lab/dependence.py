"""Observation tables and dependence structures.

A dependence structure says which pairs of units may be correlated.  Every
structure answers the same three queries (``neighbors``, ``correlated_pairs``,
``max_degree``) and can be exported as a sparse symmetric adjacency matrix,
which is what the splitters and variance estimators consume.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Covariates ``L``, binary treatment ``A`` and outcome ``Y`` for ``n`` units."""

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    covariate_names: tuple = ()
    unit_ids: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("covariates must be a 2-d matrix")
        n, p = X.shape
        if n < 1:
            raise ValueError("an observation table needs at least one unit")
        A = np.asarray(self.treatment)
        Y = np.asarray(self.outcome, dtype=float)
        if A.shape != (n,) or Y.shape != (n,):
            raise ValueError(f"treatment and outcome must have length {n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("non-finite values in covariates or outcome")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("treatment must be strictly binary (0/1)")
        names = tuple(self.covariate_names) or tuple(f"L{j + 1}" for j in range(p))
        if len(names) != p:
            raise ValueError(f"expected {p} covariate names, got {len(names)}")
        ids = tuple(str(u) for u in self.unit_ids) or tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise ValueError(f"expected {n} unit ids, got {len(ids)}")
        object.__setattr__(self, "covariates", _frozen(X))
        object.__setattr__(self, "treatment", _frozen(A.astype(np.int8)))
        object.__setattr__(self, "outcome", _frozen(Y))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "unit_ids", ids)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def subset(self, indices) -> "ObservationTable":
        idx = np.asarray(indices, dtype=np.int64)
        return ObservationTable(
            self.covariates[idx],
            self.treatment[idx],
            self.outcome[idx],
            self.covariate_names,
            tuple(self.unit_ids[i] for i in idx),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["unit_id", *self.covariate_names, "A", "Y"])
            for i in range(self.n):
                w.writerow(
                    [self.unit_ids[i]]
                    + [repr(float(v)) for v in self.covariates[i]]
                    + [int(self.treatment[i]), repr(float(self.outcome[i]))]
                )

    @classmethod
    def from_csv(cls, path) -> "ObservationTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[0] != "unit_id" or header[-2:] != ["A", "Y"]:
            raise ValueError("CSV header must be: unit_id, <covariates...>, A, Y")
        ids = [r[0] for r in body]
        X = np.array([[float(v) for v in r[1:-2]] for r in body], dtype=float)
        X = X.reshape(len(body), len(header) - 3)
        A = np.array([int(float(r[-2])) for r in body])
        Y = np.array([float(r[-1]) for r in body])
        return cls(X, A, Y, tuple(header[1:-2]), tuple(ids))


class DependenceStructure:
    """Base class; subclasses are immutable descriptions over ``n`` units."""

    kind = "abstract"

    @property
    def n(self) -> int:
        raise NotImplementedError

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted indices of units correlated with unit ``i`` (never ``i`` itself)."""
        raise NotImplementedError

    def adjacency(self) -> sp.csr_matrix:
        """Sparse symmetric 0/1 matrix with zero diagonal."""
        raise NotImplementedError

    def correlated_pairs(self) -> int:
        return int(self.adjacency().nnz // 2)

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency().indptr)

    def max_degree(self) -> int:
        d = self.degrees()
        return int(d.max()) if d.size else 0

    def pairs_within(self, indices) -> int:
        """Number of correlated unordered pairs among ``indices``."""
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        sub = self.adjacency()[idx][:, idx]
        return int(sub.nnz // 2)

    def _check_index(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"unit index {i} out of range for n={self.n}")

    def to_json(self, unit_ids: Sequence[str]) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Independent(DependenceStructure):
    size: int
    kind = "independent"

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("n must be positive")

    @property
    def n(self):
        return self.size

    def neighbors(self, i):
        self._check_index(i)
        return np.empty(0, dtype=np.int64)

    def adjacency(self):
        return sp.csr_matrix((self.size, self.size), dtype=np.int8)

    def correlated_pairs(self):
        return 0

    def to_json(self, unit_ids):
        return {"kind": self.kind}


def _group_codes(labels):
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return codes.astype(np.int64)


def _pairs_in_groups(codes) -> int:
    counts = np.bincount(codes)
    return int(np.sum(counts * (counts - 1) // 2))


def _group_adjacency(codes) -> sp.csr_matrix:
    # units sharing a group code, diagonal removed
    n = codes.size
    memb = sp.csr_matrix((np.ones(n, dtype=np.int32), (np.arange(n), codes)))
    adj = (memb @ memb.T).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    adj.data[:] = 1
    return adj.astype(np.int8)


@dataclass(frozen=True, eq=False)
class OneWayClustered(DependenceStructure):
    cluster_id: np.ndarray
    kind = "one_way"

    def __post_init__(self):
        ids = np.asarray(self.cluster_id)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("cluster_id must be a non-empty vector")
        object.__setattr__(self, "cluster_id", _frozen(ids))
        object.__setattr__(self, "_codes", _group_codes(ids))

    @property
    def n(self):
        return self.cluster_id.size

    @property
    def codes(self):
        return self._codes

    def neighbors(self, i):
        self._check_index(i)
        out = np.flatnonzero(self._codes == self._codes[i])
        return out[out != i]

    def adjacency(self):
        return _group_adjacency(self._codes)

    def correlated_pairs(self):
        return _pairs_in_groups(self._codes)

    def max_degree(self):
        return int(np.bincount(self._codes).max() - 1)

    def to_json(self, unit_ids):
        return {"kind": self.kind,
                "cluster_id": {u: _jsonable(c) for u, c in zip(unit_ids, self.cluster_id)}}


@dataclass(frozen=True, eq=False)
class TwoWayClustered(DependenceStructure):
    """Units ``(i, j)`` and ``(i', j')`` are correlated iff ``i == i'`` or ``j == j'``."""

    row_id: np.ndarray
    col_id: np.ndarray
    kind = "two_way"

    def __post_init__(self):
        r, c = np.asarray(self.row_id), np.asarray(self.col_id)
        if r.ndim != 1 or r.shape != c.shape or r.size == 0:
            raise ValueError("row_id and col_id must be non-empty vectors of equal length")
        object.__setattr__(self, "row_id", _frozen(r))
        object.__setattr__(self, "col_id", _frozen(c))
        object.__setattr__(self, "_rows", _group_codes(r))
        object.__setattr__(self, "_cols", _group_codes(c))
        cell = self._rows * (self._cols.max() + 1) + self._cols
        object.__setattr__(self, "_cells", _group_codes(cell))

    @property
    def n(self):
        return self.row_id.size

    @property
    def row_codes(self):
        return self._rows

    @property
    def col_codes(self):
        return self._cols

    @property
    def cell_codes(self):
        return self._cells

    def neighbors(self, i):
        self._check_index(i)
        out = np.flatnonzero((self._rows == self._rows[i]) | (self._cols == self._cols[i]))
        return out[out != i]

    def adjacency(self):
        a = _group_adjacency(self._rows) + _group_adjacency(self._cols)
        a = a.tocsr()
        a.data[:] = 1
        return a.astype(np.int8)

    def correlated_pairs(self):
        # inclusion-exclusion: pairs sharing a row, or a column, minus those sharing both
        return (_pairs_in_groups(self._rows) + _pairs_in_groups(self._cols)
                - _pairs_in_groups(self._cells))

    def to_json(self, unit_ids):
        return {"kind": self.kind,
                "row_id": {u: _jsonable(r) for u, r in zip(unit_ids, self.row_id)},
                "col_id": {u: _jsonable(c) for u, c in zip(unit_ids, self.col_id)}}


@dataclass(frozen=True, eq=False)
class NetworkAdjacency(DependenceStructure):
    """Undirected network stored as CSR: sorted neighbour lists per unit.

    Symmetry and a zero diagonal are enforced here, whatever the input was.
    """

    matrix: sp.csr_matrix
    kind = "network"

    def __post_init__(self):
        g = sp.csr_matrix(self.matrix)
        if g.shape[0] != g.shape[1]:
            raise ValueError("adjacency matrix must be square")
        g = (g + g.T).tocsr()
        g.setdiag(0)
        g.eliminate_zeros()
        g.data[:] = 1
        g = g.astype(np.int8)
        g.sort_indices()
        object.__setattr__(self, "matrix", g)

    @classmethod
    def from_edges(cls, n: int, edges) -> "NetworkAdjacency":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        m = sp.csr_matrix((np.ones(len(e), dtype=np.int8), (e[:, 0], e[:, 1])), shape=(n, n))
        return cls(m)

    @property
    def n(self):
        return self.matrix.shape[0]

    def neighbors(self, i):
        self._check_index(i)
        g = self.matrix
        return g.indices[g.indptr[i]:g.indptr[i + 1]].astype(np.int64)

    def adjacency(self):
        return self.matrix

    def edges(self) -> np.ndarray:
        upper = sp.triu(self.matrix, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.column_stack([upper.row[order], upper.col[order]]).astype(np.int64)

    def to_json(self, unit_ids):
        return {"kind": self.kind,
                "edges": [[unit_ids[a], unit_ids[b]] for a, b in self.edges()]}


@dataclass(frozen=True, eq=False)
class TimeSeriesMDependent(DependenceStructure):
    """Units are time points in row order; ``|t - s| <= m`` means correlated."""

    length: int
    m: int
    kind = "m_dependent"

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("series length must be positive")
        if self.m < 0:
            raise ValueError("dependence order m must be >= 0")

    @property
    def n(self):
        return self.length

    def neighbors(self, i):
        self._check_index(i)
        lo, hi = max(0, i - self.m), min(self.length, i + self.m + 1)
        out = np.arange(lo, hi, dtype=np.int64)
        return out[out != i]

    def adjacency(self):
        T, m = self.length, min(self.m, self.length - 1)
        if m == 0:
            return sp.csr_matrix((T, T), dtype=np.int8)
        offsets = [d for d in range(-m, m + 1) if d != 0]
        diags = [np.ones(T - abs(d), dtype=np.int8) for d in offsets]
        return sp.diags(diags, offsets, shape=(T, T), format="csr", dtype=np.int8)

    def correlated_pairs(self):
        return int(sum(self.length - d for d in range(1, min(self.m, self.length - 1) + 1)))

    def max_degree(self):
        return int(min(2 * self.m, self.length - 1))

    def to_json(self, unit_ids):
        return {"kind": self.kind, "m": int(self.m)}


def _jsonable(v):
    return v.item() if isinstance(v, np.generic) else v


# -- module-level queries ---------------------------------------------------

def correlated_pairs(structure: DependenceStructure, n: int | None = None) -> int:
    """Count unordered pairs ``i < j`` that the structure deems correlated."""
    if n is not None and n != structure.n:
        raise ValueError(f"structure describes {structure.n} units, not {n}")
    return structure.correlated_pairs()


def neighbors(structure: DependenceStructure, i: int) -> set:
    return set(int(j) for j in structure.neighbors(i))


def max_degree(structure: DependenceStructure) -> int:
    return structure.max_degree()


# -- sidecar JSON -------------------------------------------------------------

def structure_to_json(structure: DependenceStructure, unit_ids: Sequence[str]) -> dict:
    if len(unit_ids) != structure.n:
        raise ValueError("unit_ids length does not match structure")
    out = structure.to_json(list(unit_ids))
    out.setdefault("n", structure.n)
    return out


def structure_from_json(doc: dict, unit_ids: Sequence[str]) -> DependenceStructure:
    kind = doc.get("kind")
    ids = list(unit_ids)
    n = len(ids)
    pos = {u: i for i, u in enumerate(ids)}
    if kind == "independent":
        return Independent(n)
    if kind == "one_way":
        return OneWayClustered(np.array([doc["cluster_id"][u] for u in ids]))
    if kind == "two_way":
        return TwoWayClustered(np.array([doc["row_id"][u] for u in ids]),
                               np.array([doc["col_id"][u] for u in ids]))
    if kind == "network":
        edges = [(pos[str(a)], pos[str(b)]) for a, b in doc.get("edges", [])]
        return NetworkAdjacency.from_edges(n, edges)
    if kind == "m_dependent":
        return TimeSeriesMDependent(n, int(doc["m"]))
    raise ValueError(f"unknown dependence structure kind: {kind!r}")


def save_dataset(table: ObservationTable, structure: DependenceStructure, directory,
                 stem: str = "data") -> tuple[Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = d / f"{stem}.csv", d / f"{stem}.structure.json"
    table.to_csv(csv_path)
    json_path.write_text(json.dumps(structure_to_json(structure, table.unit_ids), indent=1))
    return csv_path, json_path


def load_dataset(csv_path, json_path) -> tuple[ObservationTable, DependenceStructure]:
    table = ObservationTable.from_csv(csv_path)
    doc = json.loads(Path(json_path).read_text())
    return table, structure_from_json(doc, table.unit_ids)
