import numpy as np
import pytest

from errors import FitError, ModelError
from trees import (
    DecisionTree,
    bootstrap_rows,
    fit_cart,
    fit_forest,
    forest_importances,
    grow_tree,
    prune_tree,
)


@pytest.fixture
def diagonal_data():
    """Two informative columns (diagonal boundary) plus one noise column."""
    rng = np.random.default_rng(0)
    X = rng.random((300, 3))
    y = (X[:, 0] + X[:, 1] > 1.0).astype(int)
    return X, y


@pytest.fixture
def threshold_data():
    rng = np.random.default_rng(1)
    X = rng.random((200, 4))
    y = (X[:, 2] > 0.6).astype(int)
    return X, y


# --- Tests for grow_tree ---


class TestGrowTree:
    def test_pure_split_on_informative_column(self, threshold_data):
        X, y = threshold_data
        tree = grow_tree(X, y)
        assert tree.feature[0] == 2
        assert tree.n_leaves == 2
        x_at = np.sort(X[:, 2])
        assert x_at[x_at <= 0.6].max() < tree.threshold[0] < x_at[x_at > 0.6].min()

    def test_fully_grown_tree_fits_training_data(self, diagonal_data):
        X, y = diagonal_data
        tree = grow_tree(X, y)
        np.testing.assert_array_equal(tree.predict_scores(X) >= 0.5, y == 1)

    def test_min_leaf_respected(self, diagonal_data):
        X, y = diagonal_data
        tree = grow_tree(X, y, min_leaf=15)
        assert tree.n_samples[tree.is_leaf].min() >= 15

    def test_max_depth(self, diagonal_data):
        X, y = diagonal_data
        assert grow_tree(X, y, max_depth=2).depth() <= 2

    def test_counts_are_consistent(self, diagonal_data):
        X, y = diagonal_data
        tree = grow_tree(X, y, min_leaf=5)
        internal = np.flatnonzero(~tree.is_leaf)
        assert tree.n_samples[0] == len(y)
        np.testing.assert_array_equal(
            tree.n_samples[internal],
            tree.n_samples[tree.left[internal]] + tree.n_samples[tree.right[internal]],
        )

    def test_dict_round_trip_predicts_the_same(self, diagonal_data):
        X, y = diagonal_data
        tree = grow_tree(X, y, min_leaf=5)
        again = DecisionTree.from_dict(tree.to_dict())
        np.testing.assert_array_equal(again.predict_scores(X), tree.predict_scores(X))


# --- Tests for pruning ---


class TestPruning:
    def test_cp_zero_keeps_useful_splits(self, diagonal_data):
        X, y = diagonal_data
        full = grow_tree(X, y, min_leaf=5)
        assert prune_tree(full, 0.0).n_leaves >= 4

    def test_larger_cp_never_grows_the_tree(self, diagonal_data):
        X, y = diagonal_data
        full = grow_tree(X, y, min_leaf=5)
        leaves = [prune_tree(full, cp).n_leaves for cp in (0.0, 0.01, 0.05, 0.2, 1.0)]
        assert leaves == sorted(leaves, reverse=True)

    def test_cp_one_collapses_to_root(self, diagonal_data):
        X, y = diagonal_data
        pruned = prune_tree(grow_tree(X, y, min_leaf=5), 1.0)
        assert pruned.node_count == 1
        assert pruned.n_samples[0] == len(y)

    def test_fit_cart_finds_boundary(self, diagonal_data):
        X, y = diagonal_data
        tree = fit_cart(X, y, cp=0.01)
        assert np.mean((tree.predict_scores(X) >= 0.5) == (y == 1)) > 0.85
        importance = tree.impurity_importance()
        assert importance[2] < min(importance[0], importance[1])

    def test_single_class(self):
        with pytest.raises(FitError, match="both classes"):
            fit_cart(np.zeros((10, 2)), np.zeros(10))

    def test_describe_marks_leaves(self, threshold_data):
        X, y = threshold_data
        lines = fit_cart(X, y).describe(["a", "b", "c", "d"])
        assert lines[1].startswith("1) root 200")
        assert any("c <= " in line for line in lines)
        assert sum(line.endswith(" *") for line in lines) == 2


# --- Tests for random forests ---


class TestRandomForest:
    def test_independent_of_worker_count(self, diagonal_data):
        X, y = diagonal_data
        one = fit_forest(X, y, n_trees=12, mtry=2, seed=5, n_jobs=1)
        two = fit_forest(X, y, n_trees=12, mtry=2, seed=5, n_jobs=2)
        np.testing.assert_array_equal(one.predict_scores(X), two.predict_scores(X))

    def test_seed_changes_forest(self, diagonal_data):
        X, y = diagonal_data
        a = fit_forest(X, y, n_trees=5, mtry=1, seed=1)
        b = fit_forest(X, y, n_trees=5, mtry=1, seed=2)
        assert not np.array_equal(a.votes(X[:50]), b.votes(X[:50]))

    def test_oob_rows_exclude_bootstrap(self, diagonal_data):
        X, y = diagonal_data
        forest = fit_forest(X, y, n_trees=3, mtry=2, seed=9)
        in_bag = set(bootstrap_rows(9, 1, len(y)).tolist())
        oob = set(forest.oob_rows(1).tolist())
        assert not in_bag & oob
        assert in_bag | oob == set(range(len(y)))

    def test_oob_accuracy_is_honest(self, diagonal_data):
        X, y = diagonal_data
        forest = fit_forest(X, y, n_trees=40, mtry=2, seed=3)
        train_accuracy = np.mean((forest.predict_scores(X) >= 0.5) == (y == 1))
        oob = forest.oob_accuracy(X, y)
        assert 0.7 < oob <= train_accuracy

    def test_importances_rank_informative_columns(self, diagonal_data):
        X, y = diagonal_data
        forest = fit_forest(X, y, n_trees=40, mtry=2, seed=3)
        mda, mdg = forest_importances(forest, X, y)
        assert mda[2] < min(mda[0], mda[1])
        assert mdg[2] < min(mdg[0], mdg[1])

    def test_no_bootstrap_means_no_oob(self, diagonal_data):
        X, y = diagonal_data
        forest = fit_forest(X, y, n_trees=2, mtry=3, bootstrap=False)
        mda, mdg = forest_importances(forest, X, y, oob=False)
        assert mda is None and mdg.shape == (3,)
        with pytest.raises(ModelError):
            forest_importances(forest, X, y, oob=True)

    @pytest.mark.parametrize("min_leaf", [1, 5])
    def test_single_full_tree_equals_cart_growth(self, diagonal_data, min_leaf):
        X, y = diagonal_data
        forest = fit_forest(X, y, n_trees=1, mtry=3, min_leaf=min_leaf, bootstrap=False, seed=8)
        (tree,) = forest.trees
        expected = grow_tree(X, y, min_leaf=min_leaf)
        for name in ("feature", "threshold", "left", "right", "n_samples", "n_pos"):
            np.testing.assert_array_equal(getattr(tree, name), getattr(expected, name))

    def test_invalid_mtry(self, diagonal_data):
        X, y = diagonal_data
        with pytest.raises(ModelError, match="mtry"):
            fit_forest(X, y, mtry=4)
