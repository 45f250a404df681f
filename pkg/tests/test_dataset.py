"""Dataset loading, storage semantics, and round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import forestfuse as ff


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def two_continuous():
    return ff.continuous_schema(["a", "b"])


class TestDenseCsv:
    def test_basic_load_with_missing(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b\n1.0,2.0\n3.0,NA\n")
        ds = ff.load_dense_csv(path, two_continuous())
        assert ds.n_rows == 2
        assert ds.n_features == 2
        assert ds.n_missing == 1
        assert ds.is_missing(1, 1)
        assert ff.get_value(ds, 0, 1) == 2.0
        assert ff.get_value(ds, 1, 1) is None

    def test_unknown_category_label(self, tmp_path):
        schema = ff.FeatureSchema([
            ff.Feature("color", ff.CATEGORICAL, ("red", "blue")),
        ])
        path = write(tmp_path, "d.csv", "color\nred\ngreen\n")
        with pytest.raises(ff.SchemaError, match="green"):
            ff.load_dense_csv(path, schema)

    def test_missing_token_count_matches_text_scan(self, tmp_path):
        # independent oracle: count NA tokens in the raw text before parsing
        rng = np.random.default_rng(42)
        rows = []
        for _ in range(100):
            cells = []
            for _ in range(4):
                if rng.uniform() < 0.15:
                    cells.append("NA")
                else:
                    cells.append(repr(float(rng.normal())))
            rows.append(",".join(cells))
        text = "a,b,c,d\n" + "\n".join(rows) + "\n"
        expected = sum(line.split(",").count("NA") for line in rows)
        path = write(tmp_path, "d.csv", text)
        ds = ff.load_dense_csv(path, ff.continuous_schema(list("abcd")))
        assert ds.n_missing == expected

    def test_ragged_row(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b\n1.0,2.0\n3.0\n")
        with pytest.raises(ff.FormatError, match="expected 2 fields"):
            ff.load_dense_csv(path, two_continuous())

    def test_non_numeric_continuous(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b\n1.0,zap\n")
        with pytest.raises(ff.ParseError, match="zap"):
            ff.load_dense_csv(path, two_continuous())

    def test_header_mismatch(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,c\n1.0,2.0\n")
        with pytest.raises(ff.SchemaError):
            ff.load_dense_csv(path, two_continuous())

    def test_target_column(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,y,b\n1.0,0,2.0\n3.0,1,4.0\n")
        ds = ff.load_dense_csv(path, two_continuous(), target_column="y")
        assert list(ds.target) == [0.0, 1.0]
        assert ff.get_value(ds, 1, 1) == 4.0

    def test_missing_target_column(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b\n1.0,2.0\n")
        with pytest.raises(ff.SchemaError, match="'y'"):
            ff.load_dense_csv(path, two_continuous(), target_column="y")

    def test_categorical_codes(self, tmp_path):
        schema = ff.FeatureSchema([
            ff.Feature("x", ff.CONTINUOUS),
            ff.Feature("color", ff.CATEGORICAL, ("red", "blue", "green")),
        ])
        path = write(tmp_path, "d.csv", "x,color\n1.0,blue\n2.0,red\n3.0,green\n")
        ds = ff.load_dense_csv(path, schema)
        assert [ff.get_value(ds, r, 1) for r in range(3)] == [1.0, 0.0, 2.0]

    def test_roundtrip_matches_raw_text(self, tmp_path):
        # oracle: parse the file contents with a plain text scan
        rng = np.random.default_rng(3)
        values = rng.normal(size=(20, 3))
        lines = ["a,b,c"] + [",".join(repr(float(v)) for v in row)
                             for row in values]
        path = write(tmp_path, "d.csv", "\n".join(lines) + "\n")
        ds = ff.load_dense_csv(path, ff.continuous_schema(list("abc")))
        for r in range(20):
            for k in range(3):
                assert ff.get_value(ds, r, k) == float(lines[r + 1].split(",")[k])

    def test_write_then_load_idempotent(self, tmp_path):
        path = write(tmp_path, "d.csv",
                     "a,b\n0.30000000000000004,NA\n1.5,2.25\n")
        schema = two_continuous()
        ds1 = ff.load_dense_csv(path, schema)
        out1 = tmp_path / "o1.csv"
        ff.write_dense_csv(ds1, out1)
        ds2 = ff.load_dense_csv(out1, schema)
        out2 = tmp_path / "o2.csv"
        ff.write_dense_csv(ds2, out2)
        assert out1.read_bytes() == out2.read_bytes()


class TestSvmlight:
    def test_single_entry_line(self, tmp_path):
        path = write(tmp_path, "s.txt", "1 3:0.5\n")
        ds = ff.load_sparse_svmlight(path, n_features=4)
        assert ds.is_sparse
        assert [ff.get_value(ds, 0, k) for k in range(4)] == [0.0, 0.0, 0.5, 0.0]
        assert ds.target[0] == 1.0
        assert ds.n_missing == 0

    def test_empty_feature_list(self, tmp_path):
        path = write(tmp_path, "s.txt", "0\n1 1:2.0\n")
        ds = ff.load_sparse_svmlight(path, n_features=2)
        assert [ff.get_value(ds, 0, k) for k in range(2)] == [0.0, 0.0]

    def test_nnz_matches_token_count(self, tmp_path):
        # oracle: number of ':' tokens in the raw text
        rng = np.random.default_rng(5)
        lines = []
        for _ in range(50):
            cols = sorted(rng.choice(np.arange(1, 11), size=rng.integers(0, 6),
                                     replace=False))
            toks = [f"{c}:{rng.normal():.4f}" for c in cols]
            lines.append(" ".join([str(rng.integers(0, 2))] + toks))
        text = "\n".join(lines) + "\n"
        path = write(tmp_path, "s.txt", text)
        ds = ff.load_sparse_svmlight(path, n_features=10)
        assert len(ds.data) == text.count(":")

    def test_column_zero_rejected(self, tmp_path):
        path = write(tmp_path, "s.txt", "1 0:2.0\n")
        with pytest.raises(ff.FormatError):
            ff.load_sparse_svmlight(path, n_features=3)

    def test_column_beyond_range_rejected(self, tmp_path):
        path = write(tmp_path, "s.txt", "1 4:2.0\n")
        with pytest.raises(ff.FormatError):
            ff.load_sparse_svmlight(path, n_features=3)

    def test_non_increasing_columns_rejected(self, tmp_path):
        path = write(tmp_path, "s.txt", "1 2:1.0 2:2.0\n")
        with pytest.raises(ff.FormatError, match="strictly increasing"):
            ff.load_sparse_svmlight(path, n_features=3)


class TestCellSemantics:
    def test_dense_missing_cell(self):
        ds = ff.Dataset.from_dense([[1.0, 2.0]],
                                   missing_mask=[[False, True]])
        assert ff.get_value(ds, 0, 0) == 1.0
        assert ff.get_value(ds, 0, 1) is None

    def test_csr_absent_column_is_zero(self):
        ds = ff.Dataset.from_csr([0, 1], [0], [3.0], n_features=3)
        assert ff.get_value(ds, 0, 2) == 0.0

    def test_out_of_bounds(self):
        ds = ff.Dataset.from_dense([[1.0]])
        with pytest.raises(IndexError):
            ff.get_value(ds, 0, 1)
        with pytest.raises(IndexError):
            ff.get_value(ds, 1, 0)

    def test_iteration_covers_every_cell(self):
        ds = ff.Dataset.from_dense(np.arange(12.0).reshape(3, 4),
                                   missing_mask=np.eye(3, 4, dtype=bool))
        results = [ff.get_value(ds, r, k)
                   for r in range(ds.n_rows) for k in range(ds.n_features)]
        assert len(results) == 12
        assert sum(v is None for v in results) == 3

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
    def test_csr_equals_dense_with_explicit_zeros(self, n, m, seed):
        rng = np.random.default_rng(seed)
        dense = np.round(rng.normal(size=(n, m)), 3)
        dense[rng.uniform(size=(n, m)) < 0.5] = 0.0
        indptr = [0]
        indices, data = [], []
        for r in range(n):
            for k in range(m):
                if dense[r, k] != 0.0:
                    indices.append(k)
                    data.append(dense[r, k])
            indptr.append(len(indices))
        csr = ff.Dataset.from_csr(indptr, indices, data, m)
        dd = ff.Dataset.from_dense(dense)
        for r in range(n):
            for k in range(m):
                assert ff.get_value(csr, r, k) == ff.get_value(dd, r, k)

    def test_csr_validation(self):
        with pytest.raises(ff.FormatError):
            ff.Dataset.from_csr([0, 2, 1], [0, 1], [1.0, 2.0], n_features=2)
        with pytest.raises(ff.FormatError):
            ff.Dataset.from_csr([0, 2], [1, 0], [1.0, 2.0], n_features=2)
        with pytest.raises(ff.FormatError):
            ff.Dataset.from_csr([0, 1], [5], [1.0], n_features=2)

    def test_bad_categorical_codes_rejected(self):
        schema = ff.FeatureSchema([ff.Feature("c", ff.CATEGORICAL, ("x", "y"))])
        with pytest.raises(ff.SchemaError):
            ff.Dataset.from_dense([[2.0]], schema)
        with pytest.raises(ff.SchemaError):
            ff.Dataset.from_dense([[0.5]], schema)


class TestSchemaFile:
    def test_load_schema(self, tmp_path):
        path = tmp_path / "schema.txt"
        path.write_text(
            "x,continuous\ncolor,categorical,red|blue\n# comment\n",
            encoding="utf-8")
        schema = ff.load_schema(path)
        assert schema.names == ["x", "color"]
        assert schema.features[1].categories == ("red", "blue")

    def test_duplicate_names(self):
        with pytest.raises(ff.SchemaError):
            ff.FeatureSchema([ff.Feature("a", ff.CONTINUOUS),
                              ff.Feature("a", ff.CONTINUOUS)])

    def test_categorical_needs_categories(self):
        with pytest.raises(ff.SchemaError):
            ff.Feature("c", ff.CATEGORICAL)
