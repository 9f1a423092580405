"""Correlations, chi-square tests, IQR outliers and figure data for the churn EDA."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import special

from data_model import LABELS, LEFT, STAYED, ColumnRole, Dataset, outcome_labels
from errors import StatsError

logger = logging.getLogger("stats_eda")

CHI_SQUARE_FACTORS = ("Gender", "Geography", "HasCrCard", "IsActiveMember", "NumOfProducts")
OUTLIER_COLUMNS = ("CreditScore", "Age", "Balance", "EstimatedSalary")
IQR_MULTIPLIER = 1.5


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple[str, ...]
    values: np.ndarray

    def r(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])


@dataclass(frozen=True)
class ChiSquareResult:
    factor: str
    statistic: float
    df: int
    p_value: float
    table: dict[str, tuple[int, ...]]


@dataclass(frozen=True)
class OutlierReport:
    column: str
    class_label: str | None
    fences: tuple[float, float]
    outlier_row_indices: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.outlier_row_indices)


def _numeric_column(ds: Dataset, name: str) -> np.ndarray:
    col = ds.column(name)
    if col.role is ColumnRole.OUTCOME:
        return (outcome_labels(ds) == LEFT).astype(np.float64)
    if col.role not in (ColumnRole.NUMERIC, ColumnRole.BINARY):
        raise StatsError(f"column {name!r} is not numeric or binary-coded")
    return ds.frame[name].to_numpy(dtype=np.float64)


def pearson_correlation_matrix(ds: Dataset, columns: Sequence[str]) -> CorrelationMatrix:
    """Pearson r for every pair of columns; the outcome is coded Left=1."""
    if not columns:
        raise StatsError("no columns selected")
    X = np.column_stack([_numeric_column(ds, name) for name in columns])
    centered = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(centered**2, axis=0))
    flat = np.flatnonzero(norms == 0.0)
    if flat.size:
        raise StatsError(
            f"correlation undefined for zero-variance column {columns[flat[0]]!r}"
        )
    values = (centered.T @ centered) / np.outer(norms, norms)
    values = np.clip((values + values.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    return CorrelationMatrix(tuple(columns), values)


def chi_square_survival(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if x < 0:
        raise StatsError(f"chi-square statistic must be non-negative, got {x}")
    if df < 1:
        raise StatsError(f"degrees of freedom must be positive, got {df}")
    if x == 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def contingency_table(ds: Dataset, factor: str) -> pd.DataFrame:
    """Counts of factor level x outcome label (columns Stayed, Left)."""
    col = ds.column(factor)
    if col.role in (ColumnRole.OUTCOME, ColumnRole.IGNORED):
        raise StatsError(f"column {factor!r} cannot be tabulated against the outcome")
    levels = ds.frame[factor]
    if col.role is not ColumnRole.CATEGORICAL:
        levels = levels.astype(np.int64)
    table = pd.crosstab(levels, pd.Series(outcome_labels(ds), index=ds.frame.index))
    return table.reindex(columns=list(LABELS), fill_value=0).sort_index()


def chi_square_independence(
    ds: Dataset, factor: str, outcome: str | None = None
) -> ChiSquareResult:
    """Pearson chi-square test of factor vs outcome without continuity correction."""
    if outcome is not None and outcome != ds.outcome:
        raise StatsError(f"{outcome!r} is not the outcome column")
    table = contingency_table(ds, factor)
    table = table.loc[table.sum(axis=1) > 0, table.sum(axis=0) > 0]
    if table.shape[0] < 2 or table.shape[1] < 2:
        raise StatsError(f"degenerate contingency table for {factor!r}: {table.shape}")

    observed = table.to_numpy(dtype=np.float64)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / observed.sum()
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    df = (observed.shape[0] - 1) * (observed.shape[1] - 1)
    result = ChiSquareResult(
        factor=factor,
        statistic=statistic,
        df=df,
        p_value=chi_square_survival(statistic, df),
        table={str(k): tuple(int(v) for v in row) for k, row in table.iterrows()},
    )
    logger.debug(f"chi-square {factor}: X2={statistic:.5g} df={df} p={result.p_value:.4g}")
    return result


def chi_square_suite(ds: Dataset) -> list[ChiSquareResult]:
    return [chi_square_independence(ds, factor) for factor in CHI_SQUARE_FACTORS]


def _fences(x: np.ndarray) -> tuple[float, float]:
    q1, q3 = np.quantile(x, [0.25, 0.75], method="linear")
    iqr = q3 - q1
    return float(q1 - IQR_MULTIPLIER * iqr), float(q3 + IQR_MULTIPLIER * iqr)


def iqr_outliers(ds: Dataset, column: str, by_class: bool = True) -> list[OutlierReport]:
    """Tukey-fence outliers, one report per outcome class (or one overall).

    Indices are positions in ``ds`` (not original row ids), ready for
    ``preprocess.remove_rows``.
    """
    x = _numeric_column(ds, column)
    if by_class:
        labels = outcome_labels(ds)
        groups = [(label, np.flatnonzero(labels == label)) for label in LABELS]
    else:
        groups = [(None, np.arange(ds.n))]

    reports = []
    for label, positions in groups:
        if len(positions) < 4:
            raise StatsError(
                f"need at least 4 rows to compute quartiles of {column!r}"
                f" in class {label}, got {len(positions)}"
            )
        lower, upper = _fences(x[positions])
        values = x[positions]
        flagged = positions[(values < lower) | (values > upper)]
        reports.append(
            OutlierReport(column, label, (lower, upper), tuple(int(i) for i in flagged))
        )
    return reports


def outlier_suite(ds: Dataset) -> list[OutlierReport]:
    reports = []
    for column in OUTLIER_COLUMNS:
        reports.extend(iqr_outliers(ds, column, by_class=True))
    return reports


def class_distribution_by_level(ds: Dataset, factor: str) -> dict[str, tuple[int, int]]:
    """Level -> (count Stayed, count Left)."""
    table = contingency_table(ds, factor)
    return {
        str(level): (int(row[STAYED]), int(row[LEFT])) for level, row in table.iterrows()
    }


# --- Figure data ---


class FigureKind(str, Enum):
    HISTOGRAM = "histogram"
    BAR = "bar"
    STACKED = "stacked"
    BOXPLOT = "boxplot"


@dataclass(frozen=True)
class FigureSpec:
    name: str
    kind: FigureKind
    column: str
    bins: int = 30


def churn_figures() -> list[FigureSpec]:
    """Distribution, per-class spread and churn-by-level figures of the EDA."""
    figures = [
        FigureSpec("credit_score_distribution", FigureKind.HISTOGRAM, "CreditScore"),
        FigureSpec("age_distribution", FigureKind.HISTOGRAM, "Age"),
        FigureSpec("balance_distribution", FigureKind.HISTOGRAM, "Balance"),
        FigureSpec("estimated_salary_distribution", FigureKind.HISTOGRAM, "EstimatedSalary"),
        FigureSpec("tenure_distribution", FigureKind.BAR, "Tenure"),
        FigureSpec("num_of_products_distribution", FigureKind.BAR, "NumOfProducts"),
        FigureSpec("churn_by_gender", FigureKind.STACKED, "Gender"),
        FigureSpec("churn_by_geography", FigureKind.STACKED, "Geography"),
        FigureSpec("churn_by_credit_card", FigureKind.STACKED, "HasCrCard"),
        FigureSpec("churn_by_active_member", FigureKind.STACKED, "IsActiveMember"),
        FigureSpec("churn_by_num_of_products", FigureKind.STACKED, "NumOfProducts"),
    ]
    figures.extend(
        FigureSpec(f"{name.lower()}_by_class_spread", FigureKind.BOXPLOT, name)
        for name in OUTLIER_COLUMNS
    )
    return figures


def _discrete_levels(ds: Dataset, column: str) -> pd.Series:
    col = ds.column(column)
    values = ds.frame[column]
    if col.role is ColumnRole.CATEGORICAL:
        return values
    if col.role in (ColumnRole.NUMERIC, ColumnRole.BINARY):
        x = values.to_numpy(dtype=np.float64)
        if not np.all(x == np.round(x)):
            raise StatsError(f"column {column!r} is continuous; use a histogram")
        return values.astype(np.int64)
    raise StatsError(f"column {column!r} cannot be plotted as a discrete factor")


def figure_frame(ds: Dataset, spec: FigureSpec) -> pd.DataFrame:
    """The tabular data behind one figure."""
    if not spec.column:
        raise StatsError(f"figure {spec.name!r} selects no column")

    if spec.kind is FigureKind.HISTOGRAM:
        if ds.column(spec.column).role is not ColumnRole.NUMERIC:
            raise StatsError(f"histogram needs a numeric column, got {spec.column!r}")
        counts, edges = np.histogram(ds.frame[spec.column].to_numpy(np.float64), bins=spec.bins)
        return pd.DataFrame({"bin_lower": edges[:-1], "bin_upper": edges[1:], "count": counts})

    if spec.kind is FigureKind.BAR:
        counts = _discrete_levels(ds, spec.column).value_counts().sort_index()
        return pd.DataFrame({"level": counts.index.astype(str), "count": counts.to_numpy()})

    if spec.kind is FigureKind.STACKED:
        _discrete_levels(ds, spec.column)
        table = contingency_table(ds, spec.column)
        return pd.DataFrame(
            {
                "level": table.index.astype(str),
                STAYED: table[STAYED].to_numpy(),
                LEFT: table[LEFT].to_numpy(),
                "total": table.sum(axis=1).to_numpy(),
            }
        )

    if spec.kind is FigureKind.BOXPLOT:
        if ds.column(spec.column).role is not ColumnRole.NUMERIC:
            raise StatsError(f"boxplot needs a numeric column, got {spec.column!r}")
        x = ds.frame[spec.column].to_numpy(np.float64)
        labels = outcome_labels(ds)
        rows = []
        for report in iqr_outliers(ds, spec.column, by_class=True):
            values = x[labels == report.class_label]
            lower, upper = report.fences
            inside = values[(values >= lower) & (values <= upper)]
            q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
            rows.append(
                {
                    "class": report.class_label,
                    "whisker_low": float(inside.min()),
                    "q1": float(q1),
                    "median": float(median),
                    "q3": float(q3),
                    "whisker_high": float(inside.max()),
                    "fence_low": lower,
                    "fence_high": upper,
                    "outliers": report.count,
                }
            )
        return pd.DataFrame(rows)

    raise StatsError(f"unknown figure kind {spec.kind!r}")


def emit_figure_data(ds: Dataset, spec: FigureSpec, out_dir: str | Path) -> Path:
    """Write one figure's data as ``<out_dir>/<name>.csv``."""
    frame = figure_frame(ds, spec)
    path = Path(out_dir) / f"{spec.name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def emit_all_figures(ds: Dataset, out_dir: str | Path) -> list[Path]:
    return [emit_figure_data(ds, spec, out_dir) for spec in churn_figures()]
