"""Deterministic random streams.

Every stochastic step in the package draws from a Philox counter-based
generator keyed by (seed, purpose tag, indices). Streams are independent
of each other and of execution order, so training and the permutation
analyses produce bit-identical results at any thread count.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# purpose tags; kept stable because they are part of the determinism contract
_TAG_TREE = 1
_TAG_SYNTHETIC = 2
_TAG_DONOR = 3
_TAG_PERMUTE = 4
_TAG_QUERY_DONOR = 5
_TAG_NODE = 6

_INDEX_BITS = 28
_INDEX_MASK = (1 << _INDEX_BITS) - 1

_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finalizer: a well-spread 64-bit mix."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


ROOT_ROUTE = mix64(1)


def child_route(route: int, go_right: bool) -> int:
    """Route id of a node's child; a pure function of the path from the root."""
    return mix64(route ^ (2 + int(go_right)))


def _stream(seed: int, tag: int, a: int = 0, b: int = 0) -> np.random.Generator:
    if a > _INDEX_MASK or b > _INDEX_MASK:
        raise ValueError("rng stream index out of range")
    sub = (tag << (2 * _INDEX_BITS)) | (a << _INDEX_BITS) | b
    key = np.array([seed & _MASK64, sub & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def tree_rng(seed: int, tree_id: int) -> np.random.Generator:
    """Stream driving one tree's bootstrap draw."""
    return _stream(seed, _TAG_TREE, tree_id)


def node_rng(seed: int, tree_id: int, route: int) -> np.random.Generator:
    """Stream for one node's candidate-feature draw.

    Keyed by the node's path from the root, not by visit order, so a
    structural change in one subtree leaves every other node's draw
    untouched — tree growth is a locally stable function of the data.
    """
    sub = mix64((_TAG_NODE << 56) ^ (tree_id * _GOLDEN) ^ route)
    key = np.array([seed & _MASK64, sub], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def synthetic_rng(seed: int, column: int) -> np.random.Generator:
    """Stream for the column permutation used in synthetic-row generation."""
    return _stream(seed, _TAG_SYNTHETIC, column)


def donor_rng(seed: int, tree_id: int, feature: int) -> np.random.Generator:
    """Stream for donor-row draws in the local importance measures."""
    return _stream(seed, _TAG_DONOR, tree_id, feature)


def permute_rng(seed: int, tree_id: int, feature: int) -> np.random.Generator:
    """Stream for within-OOB permutations in overall variable importance."""
    return _stream(seed, _TAG_PERMUTE, tree_id, feature)


def query_donor_rng(seed: int, feature: int) -> np.random.Generator:
    """Stream for donor draws when explaining an out-of-sample query."""
    return _stream(seed, _TAG_QUERY_DONOR, feature)
