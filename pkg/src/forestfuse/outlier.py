"""Breiman-Cutler outlier scores.

A sample far from its own class in proximity space has a small sum of
squared within-class proximities, hence a large raw measure
N_j / sum(prox^2). Scores are the raw measures centered by the class
median and scaled by the class MAD (plain median absolute deviation, no
consistency factor), so each class's score median is 0 by construction.

Exact mode consumes a full proximity matrix; greedy mode approximates the
squared-proximity mass from the inverted index using only each sample's
top co-occurring classmates, trading a controlled underestimate of the
mass for never touching anything quadratic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ClassSizeError
from .forest import Forest
from .proximity import LeafIndex, ProximityMatrix

FLAG_INF_RAW = "inf_raw"
FLAG_DEGENERATE_MAD = "degenerate_mad"

DEFAULT_GREEDY_CAP = 256


@dataclass
class OutlierReport:
    raw: np.ndarray
    score: np.ndarray
    class_of: np.ndarray
    class_ids: np.ndarray
    class_median: np.ndarray
    class_mad: np.ndarray
    flags: list[tuple[str, ...]]
    mode: str
    greedy_m: int | None = None


def _check_classes(classes, n) -> np.ndarray:
    classes = np.asarray(classes, dtype=np.int64)
    if classes.shape != (n,):
        raise ArgumentError(f"classes must assign all {n} samples")
    for c in np.unique(classes):
        if np.sum(classes == c) < 2:
            raise ClassSizeError(
                f"class {c} has fewer than 2 members; outlier scores "
                "need N_j >= 2")
    return classes


def _normalize(raw: np.ndarray, classes: np.ndarray):
    """MAD-normalize raw measures within each class."""
    n = len(raw)
    score = np.zeros(n, dtype=np.float64)
    class_ids = np.unique(classes)
    medians = np.empty(len(class_ids))
    mads = np.empty(len(class_ids))
    flags: list[set] = [set() for _ in range(n)]
    for ci, c in enumerate(class_ids):
        members = np.flatnonzero(classes == c)
        vals = raw[members]
        med = float(np.median(vals))
        mad = float(np.median(np.abs(vals - med))) if np.isfinite(med) \
            else np.nan
        medians[ci] = med
        mads[ci] = mad
        # identical raws (MAD 0) or an inf-dominated class: scores undefined
        if mad == 0.0 or not np.isfinite(mad):
            for i in members:
                flags[i].add(FLAG_DEGENERATE_MAD)
            score[members] = 0.0
        else:
            score[members] = (vals - med) / mad
    for i in np.flatnonzero(np.isinf(raw)):
        flags[i].add(FLAG_INF_RAW)
    return score, class_ids, medians, mads, [tuple(sorted(f)) for f in flags]


def outlier_exact(prox: ProximityMatrix | np.ndarray, classes) -> OutlierReport:
    """Exact per-sample outlier measures from a full proximity matrix.

    raw_n = N_j / sum over same-class m != n of prox(n, m)^2; a sample
    with zero within-class proximity mass gets +inf and an ``inf_raw``
    flag. Every class must have at least 2 members.
    """
    values = prox.values if isinstance(prox, ProximityMatrix) else np.asarray(prox)
    n = values.shape[0]
    if values.shape != (n, n):
        raise ArgumentError("proximity matrix must be square")
    classes = _check_classes(classes, n)

    sq = values ** 2
    raw = np.empty(n, dtype=np.float64)
    for c in np.unique(classes):
        members = np.flatnonzero(classes == c)
        nj = len(members)
        for i in members:
            mass = float(sq[i, members[members != i]].sum())
            raw[i] = nj / mass if mass > 0 else np.inf
    score, class_ids, medians, mads, flags = _normalize(raw, classes)
    return OutlierReport(raw, score, classes, class_ids, medians, mads,
                         flags, mode="exact")


def outlier_greedy(index: LeafIndex, forest: Forest, classes,
                   m_cap: int = DEFAULT_GREEDY_CAP) -> OutlierReport:
    """Greedy approximation: keep only each sample's strongest classmates.

    Co-occurrence counts come from the posting lists; only the m_cap
    classmates with the highest counts contribute to the squared-
    proximity mass. m_cap >= N_j - 1 reproduces the exact measures.
    """
    if m_cap < 1:
        raise ArgumentError("m_cap must be >= 1")
    n = index.n_rows
    classes = _check_classes(classes, n)
    T = forest.n_trees
    leaf_of = forest.leaf_of_train

    raw = np.empty(n, dtype=np.float64)
    members_of = {c: np.flatnonzero(classes == c) for c in np.unique(classes)}
    for i in range(n):
        counts = np.zeros(n, dtype=np.int64)
        for t in range(T):
            post = index.postings.get((t, int(leaf_of[i, t])))
            if post is not None:
                counts[post] += 1
        members = members_of[int(classes[i])]
        mates = members[members != i]
        if len(mates) > m_cap:
            order = np.lexsort((mates, -counts[mates]))[:m_cap]
            mates = np.sort(mates[order])
        mass = float((((counts[mates]) / T) ** 2).sum())
        raw[i] = len(members) / mass if mass > 0 else np.inf
    score, class_ids, medians, mads, flags = _normalize(raw, classes)
    return OutlierReport(raw, score, classes, class_ids, medians, mads,
                         flags, mode="greedy", greedy_m=m_cap)
