import numpy as np
import pytest

import mldf.forest as forest_mod
from mldf.forest import (FOREST_KINDS, Forest, FoldedForest, ForestParams, assign_folds,
                         fit_folded, fit_forest, predict_folded, predict_forest,
                         sqrt_candidates)
from mldf.trees import Tree, TreeParams, fit_tree


def leaf(vec):
    return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                np.array([vec], dtype=float), np.array([1]))


def forest_of(*vectors):
    params = ForestParams(TreeParams(), n_trees=len(vectors))
    return Forest([leaf(v) for v in vectors], params, 1, len(vectors[0]))


@pytest.fixture
def data(rng):
    X = rng.normal(size=(40, 5))
    Z = (X[:, :3] + 0.3 * rng.normal(size=(40, 3)) > 0).astype(int)
    return X, Z


def test_mean_of_trees():
    np.testing.assert_array_equal(predict_forest(forest_of([1, 0], [0, 1]), [[0.0]]), [[0.5, 0.5]])
    np.testing.assert_array_equal(predict_forest(forest_of([0.25, 1]), [[3.0]]), [[0.25, 1.0]])


def test_folded_mean():
    ff = FoldedForest([forest_of([1, 0]), forest_of([0, 1])], np.array([0, 1]))
    np.testing.assert_array_equal(predict_folded(ff, [[0.0]]), [[0.5, 0.5]])
    same = FoldedForest([forest_of([0.3, 0.6])] * 3, np.array([0, 1, 2]))
    np.testing.assert_allclose(predict_folded(same, [[0.0]]), [[0.3, 0.6]], atol=1e-15)


def test_identity_case(data):
    X, Z = data
    params = ForestParams.of_kind("rf-pct", 5, n_trees=1, max_depth=4, bootstrap=False)
    forest = fit_forest(params, X, Z, seed=3)
    tree = forest.trees[0]
    np.testing.assert_array_equal(predict_forest(forest, X), tree.predict(X))


def test_determinism_and_seed_sensitivity(data):
    X, Z = data
    params = ForestParams.of_kind("erf-pct", 5, n_trees=8, max_depth=4)
    a = predict_forest(fit_forest(params, X, Z, seed=1), X)
    b = predict_forest(fit_forest(params, X, Z, seed=1), X)
    c = predict_forest(fit_forest(params, X, Z, seed=2), X)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_parallel_matches_serial(data):
    X, Z = data
    params = ForestParams.of_kind("rfml-c45", 5, n_trees=6, max_depth=4)
    a = predict_forest(fit_forest(params, X, Z, seed=5), X)
    b = predict_forest(fit_forest(params, X, Z, seed=5, n_jobs=3), X)
    np.testing.assert_array_equal(a, b)


def test_tree_order_invariance(data):
    X, Z = data
    forest = fit_forest(ForestParams.of_kind("rf-pct", 5, n_trees=7, max_depth=4), X, Z, seed=0)
    flipped = Forest(forest.trees[::-1], forest.params, forest.n_features, forest.n_labels)
    np.testing.assert_allclose(predict_forest(flipped, X), predict_forest(forest, X), atol=1e-12)


def test_all_kinds_bounded(data):
    X, Z = data
    for kind in FOREST_KINDS:
        P = predict_forest(fit_forest(ForestParams.of_kind(kind, 5, 5, 6), X, Z, seed=0), X)
        assert P.shape == Z.shape and (P >= 0).all() and (P <= 1).all()


def test_rows_need_not_sum_to_one(data):
    X, Z = data
    P = predict_forest(fit_forest(ForestParams.of_kind("rf-pct", 5, 5, 6), X, Z, seed=0), X)
    assert not np.allclose(P.sum(axis=1), 1.0)


def test_width_check(data):
    X, Z = data
    forest = fit_forest(ForestParams.of_kind("rf-pct", 5, 2, 3), X, Z, seed=0)
    with pytest.raises(ValueError):
        predict_forest(forest, X[:, :4])


def test_unknown_kind():
    with pytest.raises(ValueError):
        ForestParams.of_kind("gbdt", 4, 10, 3)


def test_sqrt_candidates():
    assert [sqrt_candidates(d) for d in (1, 3, 4, 103, 294)] == [1, 1, 2, 10, 17]


def test_fold_assignment():
    folds = assign_folds(23, 5, seed=9)
    assert sorted(np.bincount(folds)) == [4, 4, 5, 5, 5]
    np.testing.assert_array_equal(folds, assign_folds(23, 5, seed=9))
    with pytest.raises(ValueError):
        assign_folds(3, 5, seed=0)


def test_out_of_fold_protocol(monkeypatch, data):
    X, Z = data
    seen = []

    def tracking_fit(params, X_, Z_, rows=None):
        seen.append(np.array(rows))
        return fit_tree(params, X_, Z_, rows)

    monkeypatch.setattr(forest_mod, "fit_tree", tracking_fit)
    params = ForestParams.of_kind("rf-pct", 5, n_trees=3, max_depth=3)
    ff, oof = fit_folded(params, X, Z, k=4, seed=2)
    assert ff.k == 4 and len(seen) == 12
    for f in range(4):
        held = np.flatnonzero(ff.folds == f)
        for rows in seen[3 * f:3 * f + 3]:
            assert not np.isin(rows, held).any()
        np.testing.assert_array_equal(oof[held], predict_forest(ff.forests[f], X[held]))
    assert ((oof >= 0) & (oof <= 1)).all()


def test_two_fold_example():
    X = np.arange(4, dtype=float)[:, None]
    Z = np.array([[0], [0], [1], [1]])
    params = ForestParams.of_kind("rf-pct", 1, n_trees=1, max_depth=1, bootstrap=False)
    ff, oof = fit_folded(params, X, Z, k=2, seed=0)
    for f in range(2):
        others = ff.folds != f
        np.testing.assert_allclose(oof[ff.folds == f], Z[others].mean(), atol=1e-15)


def test_fold_count_check(data):
    X, Z = data
    with pytest.raises(ValueError):
        fit_folded(ForestParams.of_kind("rf-pct", 5, 1, 2), X[:3], Z[:3], k=5, seed=0)


def test_duplicated_data_folded_equals_single(rng):
    x, z = rng.normal(size=3), np.array([1, 0, 1])
    X, Z = np.tile(x, (25, 1)), np.tile(z, (25, 1))
    params = ForestParams.of_kind("erf-pct", 3, n_trees=4, max_depth=5)
    ff, _ = fit_folded(params, X, Z, k=5, seed=1)
    single = fit_forest(params, X, Z, seed=1)
    np.testing.assert_array_equal(predict_folded(ff, X), predict_forest(single, X))


def test_yeast_sized_smoke(rng):
    X = rng.normal(size=(1200, 103))
    Z = (X[:, :14] + rng.normal(size=(1200, 14)) > 0).astype(int)
    forest = fit_forest(ForestParams.of_kind("rf-pct", 103, 100, 9), X, Z, seed=0)
    for t in forest.trees:
        assert ((t.value >= 0) & (t.value <= 1)).all()
