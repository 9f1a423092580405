import numpy as np
import pytest

from classifiers import ModelSpec
from data_model import LEFT, STAYED
from errors import TuningError
from feature_selection import (
    embedded_rankings,
    predictor_groups,
    rfe,
    subset_columns,
    top5_subset,
)
from preprocess import FeatureTable
from tuning import CvSpec

# --- Tests for predictor groups ---


class TestPredictorGroups:
    def test_dummies_grouped_under_their_factor(self, churn_table):
        groups = predictor_groups(churn_table.columns)
        assert len(groups) == 10
        assert groups["Geography"] == ["GeographyGermany", "GeographySpain"]
        assert groups["Gender"] == ["GenderMale"]
        assert list(groups)[:3] == ["CreditScore", "Geography", "Gender"]

    def test_subset_columns_expands_factors(self):
        assert subset_columns(top5_subset()) == [
            "Age",
            "NumOfProducts",
            "IsActiveMember",
            "Balance",
            "GeographyGermany",
            "GeographySpain",
        ]


# --- Tests for importance rankings ---


class TestEmbeddedRankings:
    def test_every_column_is_ranked(self, churn_table):
        rankings = embedded_rankings(
            churn_table, ModelSpec("cart"), ModelSpec("rf", {"n_trees": 20, "mtry": 3}, seed=1)
        )
        for ranking in (rankings.cart, rankings.rf_accuracy, rankings.rf_gini):
            assert sorted(ranking.variables) == sorted(churn_table.columns)
            assert max(score for _, score in ranking.entries) == 100.0
        assert set(rankings.to_dict()) == {
            "cart",
            "rf_mean_decrease_accuracy",
            "rf_mean_decrease_gini",
        }


# --- Tests for recursive feature elimination ---


class TestRfe:
    @pytest.fixture
    def result(self, churn_table):
        return rfe(churn_table, [2, 5], CvSpec(folds=3, repeats=1, seed=1), n_trees=10, seed=2)

    def test_full_set_is_always_scored(self, result):
        assert result.sizes == (2, 5, 10)
        assert all(len(result.fold_accuracy[s]) == 3 for s in result.sizes)

    def test_chosen_size_has_best_accuracy(self, churn_table, result):
        assert result.chosen_size in result.sizes
        assert result.best_accuracy == max(result.accuracy.values())
        assert len(result.chosen_variables) == result.chosen_size
        assert set(result.chosen_variables) <= set(predictor_groups(churn_table.columns))

    def test_seeded(self, churn_table, result):
        again = rfe(churn_table, [2, 5], CvSpec(folds=3, repeats=1, seed=1), n_trees=10, seed=2)
        assert again.to_dict() == result.to_dict()

    def test_finds_the_informative_pair_among_noise(self):
        rng = np.random.default_rng(11)
        X = rng.random((400, 10))
        y = X[:, 0] + X[:, 1] > 1.0
        columns = tuple(f"x{j}" for j in range(10))
        table = FeatureTable(columns, X, np.where(y, LEFT, STAYED).astype(object))
        result = rfe(table, [2, 5], CvSpec(folds=3, repeats=1, seed=1), n_trees=30, seed=3)
        assert result.chosen_size == 2
        assert set(result.chosen_variables) == {"x0", "x1"}

    @pytest.mark.parametrize("sizes", [[], [0, 3], [11]])
    def test_bad_sizes(self, churn_table, sizes):
        with pytest.raises(TuningError):
            rfe(churn_table, sizes, CvSpec(folds=3, repeats=1))
