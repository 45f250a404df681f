"""Training, prediction, OOB estimation, and the synthetic-row generator."""

import numpy as np
import pytest
from helpers import assemble_forest, blobs_dataset, leaf_tree, stump, walk_tree

import forestfuse as ff


class TestGenerateSynthetic:
    def test_columns_are_permutations(self):
        rng = np.random.default_rng(0)
        ds = ff.Dataset.from_dense(rng.normal(size=(40, 3)))
        syn = ff.generate_synthetic(ds, seed=9)
        for k in range(3):
            assert np.array_equal(np.sort(syn.values[:, k]),
                                  np.sort(ds.values[:, k]))

    def test_single_row_identity(self):
        ds = ff.Dataset.from_dense([[1.0, 2.0, 3.0]])
        syn = ff.generate_synthetic(ds, seed=5)
        assert np.array_equal(syn.values, ds.values)

    def test_destroys_correlation(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=1000)
        ds = ff.Dataset.from_dense(np.column_stack([x, x]))
        syn = ff.generate_synthetic(ds, seed=2)
        r = np.corrcoef(syn.values[:, 0], syn.values[:, 1])[0, 1]
        assert abs(r) < 0.1

    def test_empty_dataset(self):
        ds = ff.Dataset.from_dense(np.empty((0, 2)))
        with pytest.raises(ff.ArgumentError):
            ff.generate_synthetic(ds, seed=0)

    def test_missing_values_rejected(self):
        ds = ff.Dataset.from_dense([[1.0], [2.0]],
                                   missing_mask=[[True], [False]])
        with pytest.raises(ff.ArgumentError):
            ff.generate_synthetic(ds, seed=0)

    def test_csr_columns_are_permutations(self):
        ds = ff.Dataset.from_csr([0, 2, 3, 3, 4], [0, 1, 1, 0],
                                 [1.0, 2.0, 3.0, 4.0], n_features=2)
        syn = ff.generate_synthetic(ds, seed=3)
        assert syn.is_sparse
        dense = ds.to_dense()
        sdense = syn.to_dense()
        for k in range(2):
            assert np.array_equal(np.sort(sdense[:, k]), np.sort(dense[:, k]))


class TestTrainValidation:
    def test_classification_needs_target(self):
        ds = ff.Dataset.from_dense(np.zeros((5, 2)))
        with pytest.raises(ff.ConfigError):
            ff.train(ds, ff.ForestConfig(mode="classification", n_trees=1))

    def test_unsupervised_rejects_target(self):
        ds = ff.Dataset.from_dense(np.zeros((5, 2)), target=np.zeros(5))
        with pytest.raises(ff.ConfigError):
            ff.train(ds, ff.ForestConfig(mode="unsupervised", n_trees=1))

    def test_missing_values_rejected(self):
        ds = ff.Dataset.from_dense([[1.0], [2.0]],
                                   missing_mask=[[True], [False]],
                                   target=[0.0, 1.0])
        with pytest.raises(ff.ArgumentError, match="missing"):
            ff.train(ds, ff.ForestConfig(mode="classification", n_trees=1))

    def test_non_integer_labels_rejected(self):
        ds = ff.Dataset.from_dense([[1.0], [2.0]], target=[0.5, 1.0])
        with pytest.raises(ff.ConfigError):
            ff.train(ds, ff.ForestConfig(mode="classification", n_trees=1))

    def test_bad_config(self):
        with pytest.raises(ff.ConfigError):
            ff.ForestConfig(mode="classification", n_trees=0).validate()
        with pytest.raises(ff.ConfigError):
            ff.ForestConfig(mode="nope").validate()
        with pytest.raises(ff.ConfigError):
            ff.ForestConfig(mode="regression", n_bins=1).validate()

    def test_mtry_bounds(self):
        ds = ff.Dataset.from_dense(np.random.default_rng(0).normal(size=(10, 2)),
                                   target=np.zeros(10))
        with pytest.raises(ff.ConfigError):
            ff.train(ds, ff.ForestConfig(mode="classification", n_trees=1,
                                         mtry=3))


class TestTraining:
    def test_separable_blobs_low_oob(self):
        ds = blobs_dataset(100, seed=4)
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=50, seed=1))
        assert forest.oob_error < 0.05

    def test_unsupervised_doubles_training_rows(self):
        rng = np.random.default_rng(2)
        ds = ff.Dataset.from_dense(rng.normal(size=(30, 3)))
        forest = ff.train(ds, ff.ForestConfig(mode="unsupervised",
                                              n_trees=5, seed=0))
        assert forest.n_train_rows == 60
        assert forest.synthetic_offset == 30
        assert forest.n_scored_rows == 30
        assert forest.leaf_of_train.shape == (60, 5)

    def test_unsupervised_independent_vs_dependent(self):
        rng = np.random.default_rng(3)
        iid = ff.Dataset.from_dense(rng.uniform(size=(400, 4)))
        f1 = ff.train(iid, ff.ForestConfig(mode="unsupervised", n_trees=25,
                                           min_node_size=5, seed=0))
        assert f1.oob_error >= 0.40

        X = rng.uniform(size=(400, 4))
        X[:, 1] = X[:, 0] + rng.normal(scale=0.02, size=400)
        dep = ff.Dataset.from_dense(X)
        f2 = ff.train(dep, ff.ForestConfig(mode="unsupervised", n_trees=25,
                                           min_node_size=5, seed=0))
        assert f2.oob_error < 0.40

    def test_determinism_across_threads(self):
        ds = blobs_dataset(60, seed=7)
        cfg = ff.ForestConfig(mode="classification", n_trees=8, seed=42)
        f1 = ff.train(ds, cfg, n_threads=1)
        f4 = ff.train(ds, cfg, n_threads=4)
        assert np.array_equal(f1.inbag_counts, f4.inbag_counts)
        assert np.array_equal(f1.leaf_of_train, f4.leaf_of_train)
        for t1, t4 in zip(f1.trees, f4.trees):
            assert np.array_equal(t1.feature, t4.feature)
            assert np.array_equal(t1.threshold, t4.threshold, equal_nan=True)
            assert np.array_equal(t1.value, t4.value)

    def test_probabilities_sum_to_one(self):
        ds = blobs_dataset(50, seed=9)
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=20, seed=3))
        proba = ff.predict_proba(forest, ds)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)

    def test_leaf_histograms_sum_to_inbag_counts(self):
        ds = blobs_dataset(40, seed=11)
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=6, seed=5))
        for t, tree in enumerate(forest.trees):
            leaves = tree.leaf_id >= 0
            assert tree.value[leaves].sum() == forest.inbag_counts[:, t].sum()
            np.testing.assert_array_equal(
                tree.value[leaves].sum(axis=1), tree.n_node[leaves])

    def test_csr_and_dense_training_agree(self):
        rng = np.random.default_rng(13)
        dense = rng.normal(size=(80, 4))
        dense[rng.uniform(size=(80, 4)) < 0.5] = 0.0
        y = (dense[:, 0] > 0).astype(float)
        indptr, indices, data = [0], [], []
        for r in range(80):
            for k in range(4):
                if dense[r, k] != 0.0:
                    indices.append(k)
                    data.append(dense[r, k])
            indptr.append(len(indices))
        ds_dense = ff.Dataset.from_dense(dense, target=y)
        ds_csr = ff.Dataset.from_csr(indptr, indices, data, 4,
                                     schema=ds_dense.schema, target=y)
        cfg = ff.ForestConfig(mode="classification", n_trees=5, seed=21)
        f_dense = ff.train(ds_dense, cfg)
        f_csr = ff.train(ds_csr, cfg)
        assert np.array_equal(f_dense.leaf_of_train, f_csr.leaf_of_train)
        np.testing.assert_array_equal(
            ff.predict_proba(f_dense, ds_dense),
            ff.predict_proba(f_csr, ds_dense))

    def test_regression_mode(self):
        rng = np.random.default_rng(15)
        X = rng.uniform(size=(120, 3))
        y = 3 * X[:, 0] + rng.normal(scale=0.05, size=120)
        ds = ff.Dataset.from_dense(X, target=y)
        forest = ff.train(ds, ff.ForestConfig(mode="regression", n_trees=30,
                                              seed=2))
        pred = ff.predict(forest, ds)
        assert np.corrcoef(pred, y)[0, 1] > 0.9
        # convexity: forest means stay inside the target range
        assert pred.min() >= y.min() - 1e-12
        assert pred.max() <= y.max() + 1e-12


class TestPredict:
    def test_single_root_leaf_all_one_class(self):
        ds = ff.Dataset.from_dense([[0.0], [1.0]], target=[0.0, 0.0])
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=1, seed=0))
        proba = ff.predict_proba(forest, np.array([[123.0]]))
        assert proba[0, 0] == 1.0

    def test_three_tree_hand_average(self):
        # classification: three stumps on feature 0, votes computed by hand
        t1 = stump(0, 0.5, [3.0, 1.0], [0.0, 4.0])   # left: 3/4 class0
        t2 = stump(0, 1.5, [2.0, 2.0], [1.0, 0.0])   # left: 1/2 class0
        t3 = stump(0, -0.5, [5.0, 0.0], [1.0, 3.0])  # right: 1/4 class0
        ds = ff.Dataset.from_dense([[0.0]], target=[0.0])
        forest = assemble_forest([t1, t2, t3], ds, n_classes=2)
        proba = ff.predict_proba(forest, np.array([[0.0]]))
        # query 0.0 goes left, left, right
        expected0 = (3 / 4 + 1 / 2 + 1 / 4) / 3
        assert proba[0, 0] == pytest.approx(expected0, abs=1e-15)

    def test_three_tree_regression_average(self):
        trees = [stump(0, 0.0, -1.0, 2.0), stump(0, 1.0, 0.5, 3.0),
                 leaf_tree(mean=10.0)]
        ds = ff.Dataset.from_dense([[0.0]], target=[0.0])
        forest = assemble_forest(trees, ds, mode="regression")
        pred = ff.predict(forest, np.array([[0.5]]))
        assert pred[0] == pytest.approx((2.0 + 0.5 + 10.0) / 3, abs=1e-15)

    def test_dimension_mismatch(self):
        ds = blobs_dataset(10, seed=0)
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=2, seed=0))
        with pytest.raises(ff.ArgumentError):
            ff.predict(forest, np.zeros((1, 5)))

    def test_argmax_tie_goes_to_lower_class(self):
        tree = leaf_tree(class_counts=[2.0, 2.0], n=4)
        ds = ff.Dataset.from_dense([[0.0]], target=[0.0])
        forest = assemble_forest([tree], ds, n_classes=2)
        assert ff.predict(forest, np.array([[0.0]]))[0] == 0


class TestLeafOf:
    def test_root_leaf(self):
        ds = ff.Dataset.from_dense([[0.0]], target=[0.0])
        forest = assemble_forest([leaf_tree(class_counts=[1.0])], ds,
                                 n_classes=1)
        assert ff.leaf_of(forest, 0, [12345.0]) == 0

    def test_tie_goes_left(self):
        tree = stump(0, 5.0, [1.0, 0.0], [0.0, 1.0])
        ds = ff.Dataset.from_dense([[0.0]], target=[0.0])
        forest = assemble_forest([tree], ds, n_classes=2)
        assert ff.leaf_of(forest, 0, [5.0]) == 0
        assert ff.leaf_of(forest, 0, [5.0001]) == 1

    def test_matches_stored_leaf_assignments(self):
        ds = blobs_dataset(30, seed=19)
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=7, seed=3))
        for t in range(forest.n_trees):
            for r in range(ds.n_rows):
                assert ff.leaf_of(forest, t, ds.values[r]) == \
                    forest.leaf_of_train[r, t]

    def test_apply_matches_reference_walk(self):
        ds = blobs_dataset(25, seed=23)
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=4, seed=9))
        for tree in forest.trees:
            got = tree.apply(ds.values, np.arange(ds.n_rows))
            want = [walk_tree(tree, ds.values[r]) for r in range(ds.n_rows)]
            assert np.array_equal(got, want)


class TestOOB:
    def test_all_inbag_reports_all_skipped(self):
        ds = ff.Dataset.from_dense([[0.0], [1.0]], target=[0.0, 1.0])
        tree = stump(0, 0.5, [1.0, 0.0], [0.0, 1.0])
        forest = assemble_forest([tree], ds, n_classes=2,
                                 inbag_counts=np.ones((2, 1)))
        result = ff.oob_error(forest, ds)
        assert np.isnan(result.value)
        assert result.n_skipped == 2
        assert result.n_evaluated == 0

    def test_oob_fraction_near_one_over_e(self):
        rng = np.random.default_rng(29)
        ds = ff.Dataset.from_dense(rng.normal(size=(1000, 2)),
                                   target=(rng.uniform(size=1000) > 0.5)
                                   .astype(float))
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=20, max_depth=2,
                                              seed=8))
        frac = forest.oob_mask().sum(axis=0).mean() / 1000
        assert 0.34 <= frac <= 0.40  # 1 - (1 - 1/n)^n ~ 0.368

    def test_oob_close_to_holdout(self):
        ds = blobs_dataset(150, seed=31)
        forest = ff.train(ds, ff.ForestConfig(mode="classification",
                                              n_trees=60, seed=12))
        test = blobs_dataset(1500, seed=97)
        holdout = np.mean(ff.predict(forest, test) != test.target)
        assert abs(forest.oob_error - holdout) <= 0.03
