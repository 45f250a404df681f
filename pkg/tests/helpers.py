"""Shared generators and hand-built forest utilities for the test suite."""

import numpy as np

import forestfuse as ff


def blobs(n_per_class, seed, sep=6.0, scale=1.0):
    """Two well-separated 2-D Gaussian blobs; labels 0/1."""
    rng = np.random.default_rng(seed)
    a = rng.normal(loc=(0.0, 0.0), scale=scale, size=(n_per_class, 2))
    b = rng.normal(loc=(sep, sep), scale=scale, size=(n_per_class, 2))
    X = np.vstack([a, b])
    y = np.concatenate([np.zeros(n_per_class), np.ones(n_per_class)])
    return X, y


def blobs_dataset(n_per_class, seed, sep=6.0, scale=1.0):
    X, y = blobs(n_per_class, seed, sep, scale)
    return ff.Dataset.from_dense(X, target=y)


def correlated_data(n, seed, n_features=5, noise=0.05):
    """Strongly cross-correlated continuous features from one latent factor."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n)
    cols = [z + rng.normal(scale=noise, size=n) for _ in range(n_features - 1)]
    cols.append(0.5 * z ** 2 + rng.normal(scale=noise, size=n))
    return np.column_stack(cols)


def mcar_mask(shape, frac, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=shape) < frac


def rank_auc(scores, labels):
    """Mann-Whitney AUC of scores against binary labels (1 = positive)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1)
    # midranks for ties
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    return (ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def leaf_tree(class_counts=None, mean=None, n=1, n_features=1):
    """Single-node tree: the root is leaf 0."""
    if class_counts is not None:
        value = np.asarray([class_counts], dtype=np.float64)
    else:
        value = np.asarray([mean], dtype=np.float64)
    return ff.Tree(
        feature=np.array([-1], dtype=np.int32),
        threshold=np.array([np.nan]),
        left=np.array([-1], dtype=np.int32),
        right=np.array([-1], dtype=np.int32),
        leaf_id=np.array([0], dtype=np.int32),
        n_node=np.array([n], dtype=np.int64),
        value=value,
        split_gain=np.zeros(n_features),
    )


def stump(feature, threshold, left_value, right_value, *, n_left=1, n_right=1,
          n_features=1):
    """Three-node tree: one split, leaf 0 on the left, leaf 1 on the right."""
    left_value = np.atleast_1d(np.asarray(left_value, dtype=np.float64))
    right_value = np.atleast_1d(np.asarray(right_value, dtype=np.float64))
    if left_value.shape == (1,):
        value = np.array([left_value[0] + right_value[0],
                          left_value[0], right_value[0]])
    else:
        value = np.vstack([left_value + right_value, left_value, right_value])
    return ff.Tree(
        feature=np.array([feature, -1, -1], dtype=np.int32),
        threshold=np.array([threshold, np.nan, np.nan]),
        left=np.array([1, -1, -1], dtype=np.int32),
        right=np.array([2, -1, -1], dtype=np.int32),
        leaf_id=np.array([-1, 0, 1], dtype=np.int32),
        n_node=np.array([n_left + n_right, n_left, n_right], dtype=np.int64),
        value=value,
        split_gain=np.zeros(n_features),
    )


def assemble_forest(trees, ds, mode="classification", n_classes=None,
                    inbag_counts=None, seed=0):
    """Forest from hand-built trees; leaf assignments come from traversal."""
    n = ds.n_rows
    T = len(trees)
    if inbag_counts is None:
        inbag_counts = np.ones((n, T), dtype=np.uint16)
    data = ds.values if not ds.is_sparse else ds
    rows = np.arange(n)
    leaf_of_train = np.column_stack(
        [t.apply(data, rows) for t in trees]).astype(np.int32)
    config = ff.ForestConfig(mode=mode, n_trees=T, seed=seed)
    return ff.Forest(
        config=config,
        trees=list(trees),
        inbag_counts=np.asarray(inbag_counts, dtype=np.uint16),
        leaf_of_train=leaf_of_train,
        n_features=ds.n_features,
        n_classes=n_classes,
        synthetic_offset=None,
        oob_error=float("nan"),
        oob_skipped=0,
    )


def walk_tree(tree, x):
    """Reference traversal, independent of Tree.apply: left iff v <= thr."""
    node = 0
    while tree.feature[node] >= 0:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = int(tree.left[node])
        else:
            node = int(tree.right[node])
    return int(tree.leaf_id[node])
