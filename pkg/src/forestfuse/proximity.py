"""Forest proximities and the leaf-assignment inverted index.

prox(i, j) is the fraction of trees in which rows i and j land in the
same terminal node. The full matrix is quadratic in row count, so it is
capped; the inverted index answers top-K similarity queries from posting
lists in O(trees x leaf size) without materializing anything quadratic.

For unsupervised forests all structures cover the real rows only; the
synthetic half of the training matrix never appears in postings or
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import ArgumentError, CapacityError
from .forest import Forest
from .rng import query_donor_rng

DEFAULT_MATRIX_CAP = 20_000


@dataclass
class ProximityMatrix:
    n: int
    values: np.ndarray
    pair_mode: str


@dataclass(frozen=True)
class Neighbor:
    row_id: int
    score: float


@dataclass
class LeafIndex:
    """Inverted index: (tree_id, leaf_id) -> sorted training row ids."""

    postings: dict
    n_trees: int
    n_rows: int


def _leaf_groups(leaves: np.ndarray):
    """Yield (leaf_id, sorted row ids) groups of one tree's assignments."""
    order = np.argsort(leaves, kind="stable")
    sorted_leaves = leaves[order]
    starts = np.flatnonzero(np.diff(sorted_leaves)) + 1
    bounds = np.concatenate([[0], starts, [len(leaves)]])
    for a, b in zip(bounds[:-1], bounds[1:]):
        yield int(sorted_leaves[a]), order[a:b]


def compute_proximity(forest: Forest, ds: Dataset, pair_mode: str | None = None,
                      *, matrix_cap: int = DEFAULT_MATRIX_CAP) -> ProximityMatrix:
    """Full proximity matrix over the training rows.

    pair_mode "all" counts every tree; "oob" restricts both the numerator
    and denominator to trees where both rows are out-of-bag (0 when no
    such tree exists). Raises CapacityError above `matrix_cap` rows; use
    the LeafIndex path for large data.
    """
    if pair_mode is None:
        pair_mode = forest.config.proximity_pairs
    if pair_mode not in ("all", "oob"):
        raise ArgumentError(f"unknown pair_mode {pair_mode!r}")
    n = forest.n_scored_rows
    if ds.n_rows != n:
        raise ArgumentError("dataset row count does not match the forest")
    if n > matrix_cap:
        raise CapacityError(
            f"{n} rows exceed the {matrix_cap}-row proximity matrix cap; "
            "use build_leaf_index / top_k_similar instead")

    T = forest.n_trees
    counts = np.zeros((n, n), dtype=np.int32)
    if pair_mode == "all":
        for t in range(T):
            for _, rows in _leaf_groups(forest.leaf_of_train[:n, t]):
                counts[np.ix_(rows, rows)] += 1
        values = counts.astype(np.float64) / T
        return ProximityMatrix(n, values, "all")

    oob = forest.oob_mask()[:n]
    denom = np.zeros((n, n), dtype=np.int32)
    for t in range(T):
        rows_oob = np.flatnonzero(oob[:, t])
        if rows_oob.size == 0:
            continue
        denom[np.ix_(rows_oob, rows_oob)] += 1
        leaves = forest.leaf_of_train[rows_oob, t]
        for _, sub in _leaf_groups(leaves):
            grp = rows_oob[sub]
            counts[np.ix_(grp, grp)] += 1
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(denom > 0, counts / np.maximum(denom, 1), 0.0)
    return ProximityMatrix(n, values, "oob")


def build_leaf_index(forest: Forest) -> LeafIndex:
    """Invert leaf assignments into per-(tree, leaf) posting lists."""
    n = forest.n_scored_rows
    postings = {}
    for t in range(forest.n_trees):
        for leaf, rows in _leaf_groups(forest.leaf_of_train[:n, t]):
            postings[(t, leaf)] = np.sort(rows).astype(np.int64)
    return LeafIndex(postings, forest.n_trees, n)


def _cooccurrence_counts(index: LeafIndex, forest: Forest, query) -> np.ndarray:
    from .forest import leaf_of

    counts = np.zeros(index.n_rows, dtype=np.int64)
    for t in range(forest.n_trees):
        post = index.postings.get((t, leaf_of(forest, t, query)))
        if post is not None:
            counts[post] += 1
    return counts


def top_k_similar(index: LeafIndex, forest: Forest, query, k: int) -> list[Neighbor]:
    """K most similar training rows to a complete query vector.

    Scores are co-occurrence counts divided by the tree count; ties break
    to the lower row id. A query equal to a training row is eligible to
    return itself. k beyond the row count truncates to the full list.
    """
    if k < 1:
        raise ArgumentError("k must be >= 1")
    counts = _cooccurrence_counts(index, forest, query)
    k = min(k, index.n_rows)
    order = np.lexsort((np.arange(index.n_rows), -counts))[:k]
    T = forest.n_trees
    return [Neighbor(int(r), counts[r] / T) for r in order]


def query_proximity_importance(forest: Forest, ds: Dataset, query, *,
                               n_repeats: int = 1, seed: int | None = None
                               ) -> np.ndarray:
    """Per-feature leaf-change fractions for an out-of-sample query.

    The OOB-and-correct filter used for training rows is vacuous for a
    point the forest never saw, so every tree counts. Donor values come
    from fixed-seed uniform draws over the training rows.
    """
    if seed is None:
        seed = forest.config.seed
    vec = np.asarray(query, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != forest.n_features:
        raise ArgumentError("query must be a vector of n_features values")
    m = forest.n_features
    n = ds.n_rows
    donor_rows = np.empty((m, n_repeats), dtype=np.int64)
    for k in range(m):
        donor_rows[k] = query_donor_rng(seed, k).integers(0, n, size=n_repeats)

    changed = np.zeros(m, dtype=np.float64)
    base = vec[None, :]
    for tree in forest.trees:
        orig = tree.apply(base, np.array([0]))[0]
        for k in range(m):
            donors = ds.gather_column(donor_rows[k], k)
            for v in donors:
                if v == vec[k]:
                    changed_leaf = False
                else:
                    mod = vec.copy()
                    mod[k] = v
                    changed_leaf = tree.apply(mod[None, :], np.array([0]))[0] != orig
                changed[k] += changed_leaf
    return changed / (forest.n_trees * n_repeats)


def top_k_similar_explained(index: LeafIndex, forest: Forest, ds: Dataset,
                            query, k: int, *, n_repeats: int = 1,
                            seed: int | None = None
                            ) -> tuple[list[Neighbor], np.ndarray]:
    """Neighbors plus the per-feature explanation of the query's placement."""
    neighbors = top_k_similar(index, forest, query, k)
    importance = query_proximity_importance(
        forest, ds, query, n_repeats=n_repeats, seed=seed)
    return neighbors, importance
