import numpy as np
import pandas as pd
import pytest
from scipy import stats

from conftest import CHURN_DATA, needs_churn_data
from data_model import LEFT, STAYED, Dataset, load_dataset, map_outcome_labels
from errors import StatsError
from stats_eda import (
    CHI_SQUARE_FACTORS,
    FigureKind,
    FigureSpec,
    chi_square_independence,
    chi_square_suite,
    chi_square_survival,
    churn_figures,
    class_distribution_by_level,
    contingency_table,
    emit_all_figures,
    figure_frame,
    iqr_outliers,
    outlier_suite,
    pearson_correlation_matrix,
)

# --- Tests for correlations ---


class TestPearsonCorrelation:
    def test_matches_numpy(self, churn_ds):
        m = pearson_correlation_matrix(churn_ds, ["Age", "Balance", "CreditScore"])
        expected = np.corrcoef(
            churn_ds.frame[["Age", "Balance", "CreditScore"]].to_numpy(float), rowvar=False
        )
        np.testing.assert_allclose(m.values, expected, atol=1e-12)

    def test_symmetric_with_unit_diagonal(self, churn_ds):
        m = pearson_correlation_matrix(churn_ds, ["Age", "Tenure", "Exited"])
        np.testing.assert_array_equal(m.values, m.values.T)
        np.testing.assert_array_equal(np.diag(m.values), 1.0)

    def test_outcome_is_coded_left_one(self, churn_ds):
        m = pearson_correlation_matrix(churn_ds, ["Age", "Exited"])
        left = (churn_ds.frame["Exited"] == LEFT).to_numpy(float)
        r = np.corrcoef(churn_ds.frame["Age"].to_numpy(float), left)[0, 1]
        assert m.r("Age", "Exited") == pytest.approx(r)

    def test_categorical_column_rejected(self, churn_ds):
        with pytest.raises(StatsError, match="not numeric"):
            pearson_correlation_matrix(churn_ds, ["Age", "Geography"])

    def test_zero_variance_rejected(self, churn_ds):
        constant = churn_ds.subset(np.flatnonzero(churn_ds.frame["HasCrCard"] == 1))
        with pytest.raises(StatsError, match="zero-variance column 'HasCrCard'"):
            pearson_correlation_matrix(constant, ["Age", "HasCrCard"])


# --- Tests for chi-square ---


class TestChiSquare:
    def test_survival_matches_scipy(self):
        for x, df in [(0.5, 1), (3.84, 1), (10.0, 3), (112.92, 1)]:
            assert chi_square_survival(x, df) == pytest.approx(stats.chi2.sf(x, df), rel=1e-10)

    def test_survival_at_zero(self):
        assert chi_square_survival(0.0, 2) == 1.0

    def test_survival_rejects_bad_input(self):
        with pytest.raises(StatsError):
            chi_square_survival(-1.0, 1)
        with pytest.raises(StatsError):
            chi_square_survival(1.0, 0)

    def test_matches_scipy_without_correction(self, churn_ds):
        result = chi_square_independence(churn_ds, "Geography")
        observed = contingency_table(churn_ds, "Geography").to_numpy()
        statistic, p, df, _ = stats.chi2_contingency(observed, correction=False)
        assert result.statistic == pytest.approx(statistic)
        assert result.p_value == pytest.approx(p)
        assert result.df == df == 2

    def test_contingency_columns_are_stayed_then_left(self, churn_ds):
        table = contingency_table(churn_ds, "Gender")
        assert list(table.columns) == [STAYED, LEFT]
        assert table.to_numpy().sum() == churn_ds.n

    def test_outcome_cannot_be_tabulated(self, churn_ds):
        with pytest.raises(StatsError):
            chi_square_independence(churn_ds, "Exited")

    def test_degenerate_table(self, churn_ds):
        france = churn_ds.subset(np.flatnonzero(churn_ds.frame["Geography"] == "France"))
        with pytest.raises(StatsError, match="degenerate"):
            chi_square_independence(france, "Geography")

    def test_statistic_ignores_level_order(self, churn_ds):
        frame = churn_ds.frame.copy()
        rotate = {"France": "Spain", "Spain": "Germany", "Germany": "France"}
        frame["Geography"] = frame["Geography"].map(rotate)
        relabelled = Dataset(frame, churn_ds.schema)
        a = chi_square_independence(churn_ds, "Geography")
        b = chi_square_independence(relabelled, "Geography")
        assert b.table != a.table
        assert b.statistic == pytest.approx(a.statistic, rel=1e-12)
        assert b.p_value == pytest.approx(a.p_value, rel=1e-10)

    @pytest.mark.parametrize("df", [1, 2, 5, 10])
    def test_survival_strictly_decreases(self, df):
        values = [chi_square_survival(x, df) for x in np.linspace(0.0, 40.0, 161)]
        assert np.all(np.diff(values) < 0)

    def test_suite_covers_every_factor(self, churn_ds):
        assert [r.factor for r in chi_square_suite(churn_ds)] == list(CHI_SQUARE_FACTORS)

    def test_distribution_by_level(self, churn_ds):
        dist = class_distribution_by_level(churn_ds, "IsActiveMember")
        assert set(dist) == {"0", "1"}
        assert sum(a + b for a, b in dist.values()) == churn_ds.n


# --- Tests for IQR outliers ---


class TestIqrOutliers:
    def test_linear_quartile_fences(self, churn_ds):
        (report,) = iqr_outliers(churn_ds, "Age", by_class=False)
        x = churn_ds.frame["Age"].to_numpy(float)
        q1, q3 = np.percentile(x, [25, 75])
        assert report.fences == pytest.approx((q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)))
        flagged = np.flatnonzero((x < report.fences[0]) | (x > report.fences[1]))
        assert list(report.outlier_row_indices) == flagged.tolist()

    def test_per_class_positions_belong_to_class(self, churn_ds):
        for report in iqr_outliers(churn_ds, "Age", by_class=True):
            labels = churn_ds.frame["Exited"].to_numpy()[list(report.outlier_row_indices)]
            assert set(labels) <= {report.class_label}

    def test_suite_reports_two_classes_per_column(self, churn_ds):
        reports = outlier_suite(churn_ds)
        assert len(reports) == 8
        assert {r.class_label for r in reports} == {STAYED, LEFT}

    def test_too_few_rows(self, churn_ds):
        with pytest.raises(StatsError, match="at least 4 rows"):
            iqr_outliers(churn_ds.subset([0, 1, 2]), "Age", by_class=False)


# --- Tests for figure data ---


class TestFigures:
    def test_fifteen_figures(self):
        figures = churn_figures()
        assert len(figures) == 15
        assert sum(f.kind is FigureKind.BOXPLOT for f in figures) == 4

    def test_histogram_counts_every_row(self, churn_ds):
        frame = figure_frame(churn_ds, FigureSpec("h", FigureKind.HISTOGRAM, "Age", bins=10))
        assert len(frame) == 10
        assert frame["count"].sum() == churn_ds.n

    def test_stacked_totals(self, churn_ds):
        frame = figure_frame(churn_ds, FigureSpec("s", FigureKind.STACKED, "Geography"))
        assert (frame[STAYED] + frame[LEFT] == frame["total"]).all()

    def test_histogram_of_categorical_rejected(self, churn_ds):
        with pytest.raises(StatsError):
            figure_frame(churn_ds, FigureSpec("h", FigureKind.HISTOGRAM, "Gender"))

    def test_bar_of_continuous_rejected(self, churn_ds):
        with pytest.raises(StatsError, match="continuous"):
            figure_frame(churn_ds, FigureSpec("b", FigureKind.BAR, "Balance"))

    def test_emit_all_figures(self, churn_ds, tmp_path):
        paths = emit_all_figures(churn_ds, tmp_path / "figures")
        assert len(paths) == 15
        boxplot = pd.read_csv(tmp_path / "figures" / "age_by_class_spread.csv")
        assert set(boxplot["class"]) == {STAYED, LEFT}


@needs_churn_data
class TestPublicChurnData:
    @pytest.fixture
    def ds(self):
        return map_outcome_labels(load_dataset(CHURN_DATA))

    def test_correlations(self, ds):
        m = pearson_correlation_matrix(ds, ["Balance", "NumOfProducts", "Age", "Exited"])
        assert m.r("Balance", "NumOfProducts") == pytest.approx(-0.304, abs=0.001)
        assert m.r("Exited", "Age") == pytest.approx(0.285, abs=0.001)

    @pytest.mark.parametrize(
        ("factor", "statistic", "df"),
        [
            ("Gender", 112.92, 1),
            ("Geography", 301.26, 2),
            ("HasCrCard", 0.47134, 1),
            ("IsActiveMember", 242.99, 1),
            ("NumOfProducts", 1503.6, 3),
        ],
    )
    def test_chi_square(self, ds, factor, statistic, df):
        result = chi_square_independence(ds, factor)
        assert result.statistic == pytest.approx(statistic, rel=0.005)
        assert result.df == df

    def test_credit_card_p_value(self, ds):
        assert chi_square_independence(ds, "HasCrCard").p_value == pytest.approx(0.4924, abs=0.001)

    def test_outlier_counts(self, ds):
        counts = {(r.column, r.class_label): r.count for r in outlier_suite(ds)}
        assert counts[("CreditScore", LEFT)] == 11
        assert counts[("Age", LEFT)] == 13
        assert counts[("Age", STAYED)] == 486
        assert counts[("Balance", STAYED)] == counts[("Balance", LEFT)] == 0
        assert counts[("EstimatedSalary", STAYED)] == counts[("EstimatedSalary", LEFT)] == 0
