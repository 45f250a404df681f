"""Tabular data containers with explicit missingness.

A Dataset is an immutable table of float64 cells stored either dense
row-major or CSR. CSR zeros are structural zeros, never missing values:
only cells marked in the missing mask are treated as absent. Categorical
features are integer-coded at load time and split as ordered codes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError, ParseError, SchemaError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

DEFAULT_MISSING_TOKEN = "NA"


@dataclass(frozen=True)
class Feature:
    """One column of the schema.

    Parameters
    ----------
    name : str
        Unique, non-empty column name.
    kind : str
        Either ``"continuous"`` or ``"categorical"``.
    categories : tuple of str
        Labels for a categorical feature; code ``c`` means
        ``categories[c]``. Empty for continuous features.
    """

    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL and len(self.categories) < 1:
            raise SchemaError(
                f"categorical feature {self.name!r} needs at least one category"
            )
        if self.kind == CONTINUOUS and self.categories:
            raise SchemaError(
                f"continuous feature {self.name!r} must not list categories"
            )


class FeatureSchema:
    """Ordered collection of features with unique names."""

    def __init__(self, features):
        features = list(features)
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        self.features: list[Feature] = features
        self._index = {f.name: i for i, f in enumerate(features)}

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def is_categorical(self) -> np.ndarray:
        """Boolean mask, True where the feature is categorical."""
        return np.array([f.kind == CATEGORICAL for f in self.features], dtype=bool)

    def n_categories(self, feature: int) -> int:
        return len(self.features[feature].categories)

    def __eq__(self, other):
        return isinstance(other, FeatureSchema) and self.features == other.features

    def __len__(self):
        return len(self.features)


def load_schema(path) -> FeatureSchema:
    """Parse a sidecar schema file.

    One feature per line: ``name,kind`` for continuous features or
    ``name,categorical,label1|label2|...`` for categoricals. Blank lines
    and lines starting with ``#`` are skipped.
    """
    features = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise FormatError(f"{path}:{lineno}: expected 'name,kind[,cats]'")
            name, kind = parts[0].strip(), parts[1].strip()
            cats: tuple[str, ...] = ()
            if len(parts) > 2 and parts[2].strip():
                cats = tuple(c.strip() for c in ",".join(parts[2:]).split("|"))
            features.append(Feature(name, kind, cats))
    return FeatureSchema(features)


def continuous_schema(names) -> FeatureSchema:
    """Schema with every listed feature continuous."""
    return FeatureSchema([Feature(n, CONTINUOUS) for n in names])


class Dataset:
    """Immutable n_rows x n_features table.

    Construct through :meth:`from_dense`, :meth:`from_csr`, or the file
    loaders. Missing cells are tracked in a separate mask; for dense
    storage the underlying cell value of a missing entry is NaN, which
    keeps accidental reads loud.
    """

    def __init__(self):
        raise TypeError("use Dataset.from_dense / Dataset.from_csr / the loaders")

    @classmethod
    def _blank(cls) -> "Dataset":
        return object.__new__(cls)

    @classmethod
    def from_dense(cls, values, schema=None, missing_mask=None, target=None):
        """Wrap a dense (n, m) float array; copies its inputs."""
        ds = cls._blank()
        values = np.array(values, dtype=np.float64, order="C", ndmin=2)
        ds.is_sparse = False
        ds.values = values
        ds.n_rows, ds.n_features = values.shape
        if schema is None:
            schema = continuous_schema([f"f{j}" for j in range(ds.n_features)])
        if schema.n_features != ds.n_features:
            raise SchemaError(
                f"schema has {schema.n_features} features, data has {ds.n_features}"
            )
        ds.schema = schema
        if missing_mask is None:
            missing_mask = np.zeros(values.shape, dtype=bool)
        else:
            missing_mask = np.array(missing_mask, dtype=bool)
            if missing_mask.shape != values.shape:
                raise ArgumentError("missing mask shape must match values")
        ds.missing = missing_mask
        ds.values[missing_mask] = np.nan
        ds._set_target(target)
        ds._check_categorical_codes()
        return ds

    @classmethod
    def from_csr(cls, indptr, indices, data, n_features, schema=None, target=None,
                 missing_pairs=()):
        """Wrap CSR arrays; validates offsets and column ordering."""
        ds = cls._blank()
        ds.is_sparse = True
        ds.indptr = np.asarray(indptr, dtype=np.int64)
        ds.indices = np.asarray(indices, dtype=np.int32)
        ds.data = np.asarray(data, dtype=np.float64)
        ds.n_rows = len(ds.indptr) - 1
        ds.n_features = int(n_features)
        if np.any(np.diff(ds.indptr) < 0):
            raise FormatError("CSR row offsets must be non-decreasing")
        if ds.indptr[0] != 0 or ds.indptr[-1] != len(ds.indices):
            raise FormatError("CSR offsets do not span the index array")
        if len(ds.indices) != len(ds.data):
            raise FormatError("CSR indices and values differ in length")
        if ds.indices.size:
            if ds.indices.min() < 0 or ds.indices.max() >= ds.n_features:
                raise FormatError("CSR column id out of range")
        for r in range(ds.n_rows):
            cols = ds.indices[ds.indptr[r]:ds.indptr[r + 1]]
            if cols.size > 1 and np.any(np.diff(cols) <= 0):
                raise FormatError(f"row {r}: CSR columns must be strictly increasing")
        if schema is None:
            schema = continuous_schema([f"f{j + 1}" for j in range(ds.n_features)])
        if schema.n_features != ds.n_features:
            raise SchemaError(
                f"schema has {schema.n_features} features, data has {ds.n_features}"
            )
        ds.schema = schema
        pairs = frozenset((int(i), int(k)) for i, k in missing_pairs)
        for i, k in pairs:
            if not (0 <= i < ds.n_rows and 0 <= k < ds.n_features):
                raise ArgumentError(f"missing pair ({i}, {k}) out of bounds")
        ds.missing_set = pairs
        ds._set_target(target)
        return ds

    def _set_target(self, target):
        if target is None:
            self.target = None
            return
        target = np.asarray(target, dtype=np.float64)
        if target.shape != (self.n_rows,):
            raise ArgumentError(
                f"target length {target.shape} does not match n_rows {self.n_rows}"
            )
        self.target = target

    def _check_categorical_codes(self):
        for k, feat in enumerate(self.schema.features):
            if feat.kind != CATEGORICAL:
                continue
            col = self.values[:, k]
            obs = col[~self.missing[:, k]]
            if obs.size == 0:
                continue
            if np.any(obs != np.floor(obs)) or obs.min() < 0 \
                    or obs.max() >= len(feat.categories):
                raise SchemaError(
                    f"feature {feat.name!r}: categorical codes must be integers "
                    f"in [0, {len(feat.categories)})"
                )

    # -- cell access -----------------------------------------------------

    @property
    def n_missing(self) -> int:
        if self.is_sparse:
            return len(self.missing_set)
        return int(self.missing.sum())

    @property
    def has_missing(self) -> bool:
        return self.n_missing > 0

    def is_missing(self, row: int, feature: int) -> bool:
        self._bounds(row, feature)
        if self.is_sparse:
            return (row, feature) in self.missing_set
        return bool(self.missing[row, feature])

    def _bounds(self, row, feature):
        if not (0 <= row < self.n_rows and 0 <= feature < self.n_features):
            raise IndexError(f"cell ({row}, {feature}) out of bounds")

    def gather_column(self, rows, feature: int) -> np.ndarray:
        """Values of one feature at the given rows (CSR absents read 0.0).

        Missingness is ignored here; callers operating on incomplete data
        must consult the mask themselves.
        """
        rows = np.asarray(rows, dtype=np.int64)
        if not self.is_sparse:
            return self.values[rows, feature]
        out = np.zeros(len(rows), dtype=np.float64)
        indptr, indices, data = self.indptr, self.indices, self.data
        for pos, r in enumerate(rows):
            s, e = indptr[r], indptr[r + 1]
            j = np.searchsorted(indices[s:e], feature)
            if j < e - s and indices[s + j] == feature:
                out[pos] = data[s + j]
        return out

    def row_dense(self, row: int) -> np.ndarray:
        """One row as a dense vector (missing cells read NaN)."""
        self._bounds(row, 0)
        if not self.is_sparse:
            return self.values[row].copy()
        out = np.zeros(self.n_features, dtype=np.float64)
        s, e = self.indptr[row], self.indptr[row + 1]
        out[self.indices[s:e]] = self.data[s:e]
        for i, k in self.missing_set:
            if i == row:
                out[k] = np.nan
        return out

    def to_dense(self) -> np.ndarray:
        """Full dense copy of the table (missing cells read NaN)."""
        if not self.is_sparse:
            return self.values.copy()
        out = np.zeros((self.n_rows, self.n_features), dtype=np.float64)
        for r in range(self.n_rows):
            s, e = self.indptr[r], self.indptr[r + 1]
            out[r, self.indices[s:e]] = self.data[s:e]
        for i, k in self.missing_set:
            out[i, k] = np.nan
        return out

    def with_values(self, values) -> "Dataset":
        """Dense Dataset with the same schema/mask/target and new values."""
        if self.is_sparse:
            raise ArgumentError("with_values requires dense storage")
        ds = Dataset._blank()
        ds.is_sparse = False
        ds.values = np.array(values, dtype=np.float64, order="C")
        if ds.values.shape != (self.n_rows, self.n_features):
            raise ArgumentError("replacement values must keep the shape")
        ds.n_rows, ds.n_features = self.n_rows, self.n_features
        ds.schema = self.schema
        ds.missing = self.missing
        ds.target = self.target
        return ds

    def without_target(self) -> "Dataset":
        if self.target is None:
            return self
        ds = Dataset._blank()
        ds.__dict__.update(self.__dict__)
        ds.target = None
        return ds

    @property
    def is_filled(self) -> bool:
        """True when every cell holds a usable value.

        An imputed dataset keeps its original mask for bookkeeping but is
        filled; a freshly loaded dataset with missing cells is not.
        """
        if self.is_sparse:
            return len(self.missing_set) == 0
        return not np.isnan(self.values).any()

    def as_complete(self) -> "Dataset":
        """View with the missing mask cleared; requires filled values."""
        if not self.has_missing:
            return self
        if not self.is_filled:
            raise ArgumentError(
                "cannot treat a dataset with unfilled cells as complete")
        ds = Dataset._blank()
        ds.__dict__.update(self.__dict__)
        ds.missing = np.zeros_like(self.missing)
        return ds


def get_value(ds: Dataset, row: int, feature: int):
    """Read one cell: a float, or None when the cell is missing.

    CSR columns absent from a row read as 0.0 (structural zero).
    """
    ds._bounds(row, feature)
    if ds.is_missing(row, feature):
        return None
    if ds.is_sparse:
        return float(ds.gather_column(np.array([row]), feature)[0])
    return float(ds.values[row, feature])


# -- dense CSV ------------------------------------------------------------

def load_dense_csv(path, schema: FeatureSchema, target_column=None,
                   missing_token: str = DEFAULT_MISSING_TOKEN) -> Dataset:
    """Load a dense CSV against a schema.

    The header must list the schema's feature names in order; a target
    column named `target_column` may appear at any position. Cells equal
    to `missing_token` populate the missing mask; categorical labels are
    mapped to their schema codes.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        target_pos = None
        if target_column is not None:
            if target_column not in header:
                raise SchemaError(
                    f"{path}: target column {target_column!r} not in header"
                )
            target_pos = header.index(target_column)
        feature_headers = [h for i, h in enumerate(header) if i != target_pos]
        if feature_headers != schema.names:
            raise SchemaError(
                f"{path}: header {feature_headers} does not match schema "
                f"{schema.names}"
            )
        col_map = [i for i in range(len(header)) if i != target_pos]

        rows, mask_rows, targets = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise FormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, "
                    f"got {len(rec)}"
                )
            vals = np.empty(schema.n_features, dtype=np.float64)
            miss = np.zeros(schema.n_features, dtype=bool)
            for k, src in enumerate(col_map):
                cell = rec[src].strip()
                feat = schema.features[k]
                if cell == missing_token:
                    vals[k] = np.nan
                    miss[k] = True
                elif feat.kind == CATEGORICAL:
                    try:
                        vals[k] = feat.categories.index(cell)
                    except ValueError:
                        raise SchemaError(
                            f"{path}:{lineno}: column {feat.name!r}: "
                            f"unknown category label {cell!r}"
                        ) from None
                else:
                    try:
                        vals[k] = float(cell)
                    except ValueError:
                        raise ParseError(
                            f"{path}:{lineno}: column {feat.name!r}: "
                            f"cannot parse {cell!r} as a number"
                        ) from None
            if target_pos is not None:
                cell = rec[target_pos].strip()
                try:
                    targets.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: cannot parse target {cell!r}"
                    ) from None
            rows.append(vals)
            mask_rows.append(miss)

    values = np.array(rows) if rows else np.empty((0, schema.n_features))
    mask = np.array(mask_rows) if rows else np.empty((0, schema.n_features), bool)
    target = np.array(targets) if target_pos is not None else None
    return Dataset.from_dense(values, schema, mask, target)


def _format_cell(ds: Dataset, row: int, k: int, missing_token: str) -> str:
    if ds.missing[row, k]:
        return missing_token
    feat = ds.schema.features[k]
    v = ds.values[row, k]
    if feat.kind == CATEGORICAL:
        return feat.categories[int(v)]
    return repr(float(v))


def write_dense_csv(ds: Dataset, path, target_column=None,
                    missing_token: str = DEFAULT_MISSING_TOKEN) -> None:
    """Write a dense Dataset back to CSV.

    Continuous cells use shortest round-trip float formatting, so a
    load/write cycle is idempotent after the first round trip.
    """
    if ds.is_sparse:
        raise ArgumentError("write_dense_csv requires dense storage")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(ds.schema.names)
        if target_column is not None:
            if ds.target is None:
                raise ArgumentError("dataset has no target to write")
            header.append(target_column)
        writer.writerow(header)
        for r in range(ds.n_rows):
            rec = [_format_cell(ds, r, k, missing_token)
                   for k in range(ds.n_features)]
            if target_column is not None:
                rec.append(repr(float(ds.target[r])))
            writer.writerow(rec)


# -- sparse SVMLight ------------------------------------------------------

def load_sparse_svmlight(path, n_features: int) -> Dataset:
    """Load SVMLight/libsvm text into a CSR Dataset.

    Lines read ``<target> <col>:<value> ...`` with 1-based strictly
    increasing columns. Absent entries are structural zeros, not missing
    values, and every feature is continuous.
    """
    if n_features < 1:
        raise ArgumentError("n_features must be >= 1")
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    targets: list[float] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                targets.append(float(parts[0]))
            except ValueError:
                raise ParseError(
                    f"{path}:{lineno}: cannot parse target {parts[0]!r}"
                ) from None
            prev = 0
            for tok in parts[1:]:
                col_s, _, val_s = tok.partition(":")
                try:
                    col = int(col_s)
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno}: bad feature token {tok!r}"
                    ) from None
                if col < 1 or col > n_features:
                    raise FormatError(
                        f"{path}:{lineno}: column {col} outside 1..{n_features}"
                    )
                if col <= prev:
                    raise FormatError(
                        f"{path}:{lineno}: columns must be strictly increasing"
                    )
                try:
                    val = float(val_s)
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: cannot parse value in {tok!r}"
                    ) from None
                indices.append(col - 1)
                data.append(val)
                prev = col
            indptr.append(len(indices))
    return Dataset.from_csr(indptr, indices, data, n_features,
                            target=np.array(targets))
