"""Model persistence.

Single-file container: magic bytes, a little-endian format version, then
length-prefixed named sections (JSON metadata, packed tree arrays, in-bag
counts, leaf assignments). Serialization is canonical — sorted JSON keys,
fixed dtypes — so identical forests produce byte-identical files, and a
save/load round trip reproduces predictions and top-K results exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset, Feature, FeatureSchema
from .errors import ModelFormatError, ProvenanceError
from .forest import Forest, ForestConfig, Tree

MAGIC = b"FFMD"
FORMAT_VERSION = 1


@dataclass
class ModelArtifact:
    forest: Forest
    schema: FeatureSchema
    fingerprint: dict
    has_index: bool = False


def dataset_fingerprint(ds: Dataset, seed: int) -> dict:
    """Content hash binding a model to its training data."""
    h = hashlib.sha256()
    h.update(struct.pack("<qq", ds.n_rows, ds.n_features))
    if ds.is_sparse:
        h.update(b"csr")
        h.update(np.ascontiguousarray(ds.indptr, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(ds.indices, dtype="<i4").tobytes())
        h.update(np.ascontiguousarray(ds.data, dtype="<f8").tobytes())
    else:
        h.update(b"dense")
        h.update(np.ascontiguousarray(ds.values, dtype="<f8").tobytes())
        h.update(np.packbits(ds.missing).tobytes())
    if ds.target is not None:
        h.update(np.ascontiguousarray(ds.target, dtype="<f8").tobytes())
    return {
        "n_rows": ds.n_rows,
        "n_features": ds.n_features,
        "seed": seed,
        "sha256": h.hexdigest(),
    }


def check_fingerprint(artifact: ModelArtifact, ds: Dataset) -> None:
    """Raise ProvenanceError unless ds matches the model's training data."""
    actual = dataset_fingerprint(ds, artifact.fingerprint["seed"])
    if actual["sha256"] != artifact.fingerprint["sha256"]:
        raise ProvenanceError(
            "dataset does not match the model's training fingerprint")


def _pack_tree(tree: Tree, n_classes) -> bytes:
    parts = [struct.pack("<q", tree.n_nodes)]
    parts.append(np.ascontiguousarray(tree.feature, dtype="<i4").tobytes())
    parts.append(np.ascontiguousarray(tree.threshold, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(tree.left, dtype="<i4").tobytes())
    parts.append(np.ascontiguousarray(tree.right, dtype="<i4").tobytes())
    parts.append(np.ascontiguousarray(tree.leaf_id, dtype="<i4").tobytes())
    parts.append(np.ascontiguousarray(tree.n_node, dtype="<i8").tobytes())
    parts.append(np.ascontiguousarray(tree.value, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(tree.split_gain, dtype="<f8").tobytes())
    return b"".join(parts)


def _unpack_tree(buf: memoryview, offset: int, n_classes, n_features):
    (n_nodes,) = struct.unpack_from("<q", buf, offset)
    offset += 8

    def take(dtype, count):
        nonlocal offset
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).copy()
        offset += arr.nbytes
        return arr

    feature = take("<i4", n_nodes)
    threshold = take("<f8", n_nodes)
    left = take("<i4", n_nodes)
    right = take("<i4", n_nodes)
    leaf_id = take("<i4", n_nodes)
    n_node = take("<i8", n_nodes)
    if n_classes:
        value = take("<f8", n_nodes * n_classes).reshape(n_nodes, n_classes)
    else:
        value = take("<f8", n_nodes)
    split_gain = take("<f8", n_features)
    tree = Tree(feature=feature.astype(np.int32),
                threshold=threshold,
                left=left.astype(np.int32),
                right=right.astype(np.int32),
                leaf_id=leaf_id.astype(np.int32),
                n_node=n_node,
                value=value,
                split_gain=split_gain)
    return tree, offset


def _schema_to_json(schema: FeatureSchema):
    return [{"name": f.name, "kind": f.kind, "categories": list(f.categories)}
            for f in schema.features]


def _schema_from_json(items) -> FeatureSchema:
    return FeatureSchema([
        Feature(d["name"], d["kind"], tuple(d["categories"])) for d in items])


def save_model(path, artifact: ModelArtifact) -> None:
    forest = artifact.forest
    meta = {
        "format_version": FORMAT_VERSION,
        "config": asdict(forest.config),
        "schema": _schema_to_json(artifact.schema),
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "n_train_rows": forest.n_train_rows,
        "synthetic_offset": forest.synthetic_offset,
        "oob_error": None if np.isnan(forest.oob_error) else forest.oob_error,
        "oob_skipped": forest.oob_skipped,
        "fingerprint": artifact.fingerprint,
        "has_index": artifact.has_index,
    }
    sections = [
        ("meta", json.dumps(meta, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")),
        ("trees", b"".join(_pack_tree(t, forest.n_classes)
                           for t in forest.trees)),
        ("inbag", np.ascontiguousarray(
            forest.inbag_counts, dtype="<u2").tobytes()),
        ("leaf_train", np.ascontiguousarray(
            forest.leaf_of_train, dtype="<i4").tobytes()),
    ]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", MAGIC, FORMAT_VERSION, len(sections)))
        for name, payload in sections:
            raw = name.encode("ascii")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_model(path) -> ModelArtifact:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a forestfuse model file")
    magic, version, n_sections = struct.unpack_from("<4sII", blob, 0)
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {version} is not supported "
            f"(expected {FORMAT_VERSION})")
    offset = 12
    sections = {}
    for _ in range(n_sections):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("ascii")
        offset += name_len
        (size,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        sections[name] = memoryview(blob)[offset:offset + size]
        offset += size
    for required in ("meta", "trees", "inbag", "leaf_train"):
        if required not in sections:
            raise ModelFormatError(f"{path}: missing section {required!r}")

    meta = json.loads(bytes(sections["meta"]).decode("utf-8"))
    config = ForestConfig(**meta["config"])
    schema = _schema_from_json(meta["schema"])
    n_classes = meta["n_classes"]
    n_features = meta["n_features"]
    n_train = meta["n_train_rows"]

    trees = []
    buf = sections["trees"]
    off = 0
    for _ in range(config.n_trees):
        tree, off = _unpack_tree(buf, off, n_classes, n_features)
        trees.append(tree)

    inbag = np.frombuffer(bytes(sections["inbag"]), dtype="<u2")
    inbag = inbag.reshape(n_train, config.n_trees).astype(np.uint16)
    leaf_train = np.frombuffer(bytes(sections["leaf_train"]), dtype="<i4")
    leaf_train = leaf_train.reshape(n_train, config.n_trees).astype(np.int32)

    oob = meta["oob_error"]
    forest = Forest(
        config=config,
        trees=trees,
        inbag_counts=inbag,
        leaf_of_train=leaf_train,
        n_features=n_features,
        n_classes=n_classes,
        synthetic_offset=meta["synthetic_offset"],
        oob_error=float("nan") if oob is None else float(oob),
        oob_skipped=meta["oob_skipped"],
    )
    return ModelArtifact(forest=forest, schema=schema,
                         fingerprint=meta["fingerprint"],
                         has_index=meta["has_index"])
