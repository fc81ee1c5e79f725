import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metaimpute.errors import DimensionMismatch, NonFiniteInput
from metaimpute.forest import default_mtry, fit_forest, predict_forest

import oracles


def test_default_mtry():
    assert [default_mtry(p) for p in (1, 2, 3, 7, 779)] == [1, 1, 1, 2, 259]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_root_split_matches_exhaustive_search(seed, p):
    rng = np.random.default_rng(seed)
    n = 12
    X = np.round(rng.standard_normal((n, p)), 1)  # rounding creates ties
    y = rng.standard_normal(n)
    forest = fit_forest(X, y, n_trees=1, mtry=p, min_node=1, bootstrap=False, seed=seed)
    tree = forest.trees[0]
    score, f, t = oracles.split_search(X, y, np.arange(n), range(p))
    if f is None:
        assert tree.feature[0] == -1
        return
    assert tree.feature[0] == f
    # the stored threshold separates the same rows as the oracle's
    xs = np.sort(np.unique(X[:, f]))
    upper = xs[xs > t][0]
    assert t <= tree.threshold[0] < upper


def test_unpruned_tree_interpolates_without_bootstrap():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((30, 2))
    y = rng.standard_normal(30)
    f = fit_forest(X, y, n_trees=1, mtry=2, min_node=1, bootstrap=False)
    np.testing.assert_allclose(f.predict(X), y)


def test_min_node_limits_leaves():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 3))
    y = rng.standard_normal(50)
    tree = fit_forest(X, y, n_trees=1, mtry=3, min_node=5, bootstrap=False).trees[0]
    leaves = tree.predict(X)
    _, counts = np.unique(leaves, return_counts=True)
    # nodes above five rows are split unless pure, and y has no ties
    assert counts.max() <= 5 and counts.sum() == 50


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_predictions_within_training_range(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 3))
    y = rng.standard_normal(25)
    f = fit_forest(X, y, n_trees=15, seed=seed)
    p = f.predict(rng.standard_normal((40, 3)) * 5)
    assert (p >= y.min()).all() and (p <= y.max()).all()


def test_seeded_determinism_and_tree_independence():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 5))
    y = X[:, 0] + 0.1 * rng.standard_normal(40)
    a = fit_forest(X, y, n_trees=20, seed=9)
    b = fit_forest(X, y, n_trees=20, seed=9)
    c = fit_forest(X, y, n_trees=5, seed=9)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    np.testing.assert_array_equal(a.tree_predictions(X)[:5], c.tree_predictions(X))
    assert not np.array_equal(a.predict(X), fit_forest(X, y, n_trees=20, seed=10).predict(X))


def test_oob_and_signal():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((200, 3))
    y = X[:, 0] + 0.1 * rng.standard_normal(200)
    f = fit_forest(X, y, n_trees=100)
    oob = f.oob_prediction(X)
    assert np.isfinite(oob).all()
    assert 1 - np.mean((oob - y) ** 2) / y.var() > 0.8
    assert (f.in_bag.sum(axis=1) == 200).all()
    np.testing.assert_array_equal(predict_forest(f, X), f.predict(X))


def test_errors():
    with pytest.raises(DimensionMismatch):
        fit_forest(np.ones((3, 2)), np.ones(2))
    with pytest.raises(NonFiniteInput):
        fit_forest(np.array([[np.nan], [1.0]]), np.ones(2))
    with pytest.raises(ValueError):
        fit_forest(np.ones((3, 2)), np.ones(3), mtry=3)
    f = fit_forest(np.arange(6.0).reshape(3, 2), np.arange(3.0), n_trees=2)
    with pytest.raises(DimensionMismatch):
        f.predict(np.ones((1, 3)))


def test_constant_response_is_single_leaf():
    f = fit_forest(np.random.default_rng(5).standard_normal((20, 2)), np.full(20, 2.5),
                   n_trees=3)
    assert all(t.n_nodes == 1 for t in f.trees)
    np.testing.assert_array_equal(f.predict(np.zeros((2, 2))), 2.5)
