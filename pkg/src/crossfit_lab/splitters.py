"""Sample-splitting plans for cross-fitting.

Four schemes are provided:

* ``as_independent`` -- random k-fold rotation that ignores dependence;
* ``two_way`` -- K x K block scheme for row/column clustered data;
* ``network_lno`` -- random folds whose training sets drop neighbours of the
  evaluation fold;
* ``nlo`` -- contiguous time blocks with an ``m``-wide gap on both sides.

Every plan evaluates each unit exactly once.  Training sets may be smaller than
the complement of the evaluation fold, but never empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dependence import DependenceStructure


class EmptyTrainingFold(ValueError):
    """A fold ended up with no training units."""

    def __init__(self, scheme, fold):
        super().__init__(f"{scheme}: fold {fold} has an empty training set")
        self.scheme = scheme
        self.fold = fold


@dataclass(frozen=True)
class Fold:
    eval: np.ndarray
    train: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    scheme: str
    k: int
    seed: int | None
    n: int
    folds: tuple

    def __post_init__(self):
        for f in self.folds:
            f.eval.setflags(write=False)
            f.train.setflags(write=False)

    def __len__(self):
        return len(self.folds)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "k": self.k,
            "seed": self.seed,
            "n": self.n,
            "folds": [{"eval": f.eval.tolist(), "train": f.train.tolist()} for f in self.folds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc) -> "SplitPlan":
        folds = tuple(
            Fold(np.asarray(f["eval"], dtype=np.int64), np.asarray(f["train"], dtype=np.int64))
            for f in doc["folds"]
        )
        return cls(doc["scheme"], int(doc["k"]), doc.get("seed"), int(doc["n"]), folds)

    def validate(self) -> None:
        """Raise if the plan breaks the partition / disjointness invariants."""
        evals = np.concatenate([f.eval for f in self.folds]) if self.folds else np.empty(0)
        if not np.array_equal(np.sort(evals), np.arange(self.n)):
            raise ValueError("evaluation sets do not partition 0..n-1")
        for i, f in enumerate(self.folds):
            if f.train.size == 0:
                raise EmptyTrainingFold(self.scheme, i)
            if np.intersect1d(f.train, f.eval).size:
                raise ValueError(f"fold {i}: train and eval overlap")


def _seed_int(seed):
    if seed is None:
        return None
    if not isinstance(seed, (int, np.integer)):
        raise TypeError("split seeds must be integers (or None)")
    return int(seed)


def _random_eval_folds(n, k, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, k)]


def _complement(n, idx):
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    return np.flatnonzero(mask)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def sample_split(n: int, k: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """One as-independent split: ``S1`` of size round(n(1 - 1/k)), ``S2`` the rest.

    Rounding is half-up.  Returns sorted index arrays ``(S1, S2)``.
    """
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    n1 = _round_half_up(n * (1 - 1 / k))
    n1 = min(max(n1, 1), n - 1)
    rng = np.random.default_rng(seed)
    s1 = np.sort(rng.choice(n, size=n1, replace=False))
    return s1, _complement(n, s1)


def as_independent_split(n: int, k: int, seed=None) -> SplitPlan:
    """Uniformly random k-fold rotation; training set is the complement of each fold."""
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    evals = _random_eval_folds(n, k, seed)
    folds = tuple(Fold(e.astype(np.int64), _complement(n, e)) for e in evals)
    return SplitPlan("as_independent", k, _seed_int(seed), n, folds)


def two_way_split(row_ids, col_ids, K: int, seed=None) -> SplitPlan:
    """K^2-fold multiway scheme for two-way clustered units.

    Rows and columns are each shuffled into ``K`` blocks.  Fold ``(a, b)``
    evaluates cells with row in block ``a`` and column in block ``b``, and trains
    on cells sharing neither a row block nor a column block with it.
    """
    rows, cols = np.asarray(row_ids), np.asarray(col_ids)
    if rows.shape != cols.shape or rows.ndim != 1:
        raise ValueError("row_ids and col_ids must be vectors of equal length")
    if K < 2:
        raise ValueError("K must be >= 2")
    urows, rcode = np.unique(rows, return_inverse=True)
    ucols, ccode = np.unique(cols, return_inverse=True)
    if urows.size < K or ucols.size < K:
        raise ValueError(
            f"two-way split needs at least K={K} distinct rows and columns "
            f"(got {urows.size} rows, {ucols.size} columns)")
    rng = np.random.default_rng(seed)
    rblock = np.empty(urows.size, dtype=np.int64)
    for b, chunk in enumerate(np.array_split(rng.permutation(urows.size), K)):
        rblock[chunk] = b
    cblock = np.empty(ucols.size, dtype=np.int64)
    for b, chunk in enumerate(np.array_split(rng.permutation(ucols.size), K)):
        cblock[chunk] = b
    rb, cb = rblock[rcode], cblock[ccode]
    folds = []
    for a in range(K):
        for b in range(K):
            ev = np.flatnonzero((rb == a) & (cb == b))
            tr = np.flatnonzero((rb != a) & (cb != b))
            if tr.size == 0:
                raise EmptyTrainingFold("two_way", len(folds))
            folds.append(Fold(ev, tr))
    n = rows.size
    return SplitPlan("two_way", K, _seed_int(seed), n, tuple(folds))


def network_lno_split(structure: DependenceStructure, n: int, k: int, seed=None) -> SplitPlan:
    """Random folds; training drops every unit adjacent to the evaluation fold.

    Evaluation folds coincide with :func:`as_independent_split` for the same
    ``(n, k, seed)``.
    """
    if structure.n != n:
        raise ValueError(f"structure describes {structure.n} units, not {n}")
    base = as_independent_split(n, k, seed)
    G = structure.adjacency()
    folds = []
    for i, f in enumerate(base.folds):
        in_eval = np.zeros(n, dtype=np.float64)
        in_eval[f.eval] = 1.0
        touches = G @ in_eval
        tr = np.flatnonzero((in_eval == 0) & (touches == 0))
        if tr.size == 0:
            raise EmptyTrainingFold("network_lno", i)
        folds.append(Fold(f.eval, tr))
    return SplitPlan("network_lno", k, base.seed, n, tuple(folds))


def nlo_split(T: int, k: int, gap: int, seed=None) -> SplitPlan:
    """Neighbours-left-out: contiguous time blocks, training excludes ``gap`` steps each side.

    The split is deterministic; ``seed`` is accepted for interface symmetry and
    only recorded.
    """
    if k < 2 or k > T:
        raise ValueError(f"need 2 <= k <= T, got k={k}, T={T}")
    if gap < 0:
        raise ValueError("gap must be >= 0")
    t = np.arange(T)
    folds = []
    for i, block in enumerate(np.array_split(t, k)):
        lo, hi = block[0], block[-1]
        tr = t[(t < lo - gap) | (t > hi + gap)]
        if tr.size == 0:
            raise EmptyTrainingFold("nlo", i)
        folds.append(Fold(block.astype(np.int64), tr.astype(np.int64)))
    return SplitPlan("nlo", k, _seed_int(seed), T, tuple(folds))
