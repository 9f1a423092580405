"""Typed loading, validation and description of the bank churn CSV."""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from errors import DatasetError

logger = logging.getLogger("data_model")

STAYED = "Stayed"
LEFT = "Left"
LABELS = (STAYED, LEFT)

ROW_NUMBER = "RowNumber"


class ColumnRole(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    BINARY = "binary"
    OUTCOME = "outcome"
    IGNORED = "ignored"


@dataclass(frozen=True)
class ColumnSchema:
    """Name, role and (for categoricals) the allowed levels of one CSV column."""

    name: str
    role: ColumnRole
    allowed_levels: frozenset[str] | None = None


CHURN_SCHEMA: tuple[ColumnSchema, ...] = (
    ColumnSchema("CustomerId", ColumnRole.IGNORED),
    ColumnSchema("Surname", ColumnRole.IGNORED),
    ColumnSchema("CreditScore", ColumnRole.NUMERIC),
    ColumnSchema(
        "Geography", ColumnRole.CATEGORICAL, frozenset({"France", "Germany", "Spain"})
    ),
    ColumnSchema("Gender", ColumnRole.CATEGORICAL, frozenset({"Female", "Male"})),
    ColumnSchema("Age", ColumnRole.NUMERIC),
    ColumnSchema("Tenure", ColumnRole.NUMERIC),
    ColumnSchema("Balance", ColumnRole.NUMERIC),
    ColumnSchema("NumOfProducts", ColumnRole.NUMERIC),
    ColumnSchema("HasCrCard", ColumnRole.BINARY),
    ColumnSchema("IsActiveMember", ColumnRole.BINARY),
    ColumnSchema("EstimatedSalary", ColumnRole.NUMERIC),
    ColumnSchema("Exited", ColumnRole.OUTCOME),
)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Churn records plus their schema.

    The frame keeps every column of the file (ignored ones included) and its
    index holds the original 0-based row number, which survives subsetting,
    splitting and row removal. Treat the frame as read-only.
    """

    frame: pd.DataFrame
    schema: tuple[ColumnSchema, ...]

    def __post_init__(self) -> None:
        outcomes = [c.name for c in self.schema if c.role is ColumnRole.OUTCOME]
        if len(outcomes) != 1:
            raise DatasetError(f"schema needs exactly one outcome column, got {outcomes}")
        if len(self.frame) == 0:
            raise DatasetError("dataset has no rows")

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def outcome(self) -> str:
        return next(c.name for c in self.schema if c.role is ColumnRole.OUTCOME)

    @property
    def predictors(self) -> list[str]:
        """Modelling predictors in schema order (ignored and outcome excluded)."""
        return [
            c.name
            for c in self.schema
            if c.role not in (ColumnRole.IGNORED, ColumnRole.OUTCOME)
        ]

    @property
    def model_frame(self) -> pd.DataFrame:
        """The modelling view: predictors plus outcome."""
        return self.frame[[*self.predictors, self.outcome]]

    @property
    def row_ids(self) -> np.ndarray:
        return self.frame.index.to_numpy(dtype=np.int64)

    @property
    def is_labelled(self) -> bool:
        return self.frame[self.outcome].dtype == object

    def column(self, name: str) -> ColumnSchema:
        for col in self.schema:
            if col.name == name:
                return col
        raise DatasetError(f"unknown column {name!r}")

    def records(self) -> list[dict]:
        return self.model_frame.to_dict(orient="records")

    def subset(self, positions: Sequence[int] | np.ndarray) -> "Dataset":
        """Rows at the given positions, original row ids preserved."""
        return Dataset(self.frame.iloc[np.asarray(positions, dtype=np.int64)], self.schema)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and self.frame.equals(other.frame)

    __hash__ = None


@dataclass(frozen=True)
class ColumnSummary:
    """Descriptive statistics of one column (numeric fields or level counts)."""

    name: str
    min: float | None = None
    max: float | None = None
    mean: float | None = None
    std_dev: float | None = None
    level_counts: dict[str, int] | None = None


def _check_header(header: list[str], schema: Sequence[ColumnSchema]) -> tuple[ColumnSchema, ...]:
    names = [c.name for c in schema]
    schema = tuple(schema)
    if header and header[0] == ROW_NUMBER and ROW_NUMBER not in names:
        header = header[1:]
        schema = (ColumnSchema(ROW_NUMBER, ColumnRole.IGNORED), *schema)
    if sorted(header) != sorted(names) or len(set(header)) != len(header):
        missing = sorted(set(names) - set(header))
        extra = sorted(set(header) - set(names))
        raise DatasetError(f"header mismatch: missing {missing}, unexpected {extra}")
    return schema


def _parse_column(raw: pd.Series, col: ColumnSchema) -> pd.Series:
    empty = raw.str.strip() == ""
    if empty.any():
        row = int(np.flatnonzero(empty.to_numpy())[0]) + 1
        raise DatasetError("missing value", row=row, column=col.name)

    if col.role in (ColumnRole.IGNORED, ColumnRole.CATEGORICAL):
        values = raw.str.strip()
        if col.allowed_levels is not None:
            bad = ~values.isin(col.allowed_levels)
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
                raise DatasetError(
                    f"unknown level {values.iloc[row - 1]!r}", row=row, column=col.name
                )
        return values

    if col.role is ColumnRole.OUTCOME and raw.str.strip().isin(LABELS).all():
        return raw.str.strip().astype(object)

    parsed = pd.to_numeric(raw.str.strip(), errors="coerce").astype(np.float64)
    bad = ~np.isfinite(parsed.to_numpy())
    if bad.any():
        row = int(np.flatnonzero(bad)[0]) + 1
        raise DatasetError(
            f"unparseable value {raw.iloc[row - 1]!r}", row=row, column=col.name
        )
    if col.role is ColumnRole.BINARY and not parsed.isin((0.0, 1.0)).all():
        row = int(np.flatnonzero(~parsed.isin((0.0, 1.0)).to_numpy())[0]) + 1
        raise DatasetError(
            f"binary value {raw.iloc[row - 1]!r} not in {{0,1}}", row=row, column=col.name
        )
    return parsed


def load_dataset(
    path: str | Path, schema: Sequence[ColumnSchema] = CHURN_SCHEMA
) -> Dataset:
    """Load and validate the churn CSV.

    Rows are numbered from 1 (first data line after the header) in error
    messages. A leading RowNumber column absent from the schema is kept as an
    ignored column.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"data file not found: {path}")

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DatasetError(f"could not parse {path}: {e}") from e

    schema = _check_header(list(raw.columns), schema)
    by_name = {c.name: c for c in schema}
    frame = pd.DataFrame(
        {name: _parse_column(raw[name], by_name[name]) for name in raw.columns},
        index=pd.RangeIndex(len(raw)),
    )
    # Schema order follows the file so that save/load round-trips.
    ordered = tuple(by_name[name] for name in raw.columns)
    ds = Dataset(frame, ordered)
    logger.info(f"Loaded {ds.n} rows x {len(ordered)} columns from {path}")
    return ds


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """Write every column (ignored ones included) back to CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # pandas writes float64 with round-trip precision
    ds.frame.to_csv(path, index=False, encoding="utf-8")
    return path


def map_outcome_labels(ds: Dataset) -> Dataset:
    """Replace the 0/1 outcome with Stayed/Left. Already-labelled data passes through."""
    if ds.is_labelled:
        return ds
    values = ds.frame[ds.outcome]
    bad = ~values.isin((0.0, 1.0))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
        raise DatasetError(
            f"outcome value {values.iloc[row - 1]!r} outside {{0,1}}",
            row=row,
            column=ds.outcome,
        )
    frame = ds.frame.copy()
    frame[ds.outcome] = np.where(values.to_numpy() == 1.0, LEFT, STAYED).astype(object)
    return Dataset(frame, ds.schema)


def outcome_labels(ds: Dataset) -> np.ndarray:
    """Stayed/Left labels as an object array, mapping 0/1 on the fly."""
    return map_outcome_labels(ds).frame[ds.outcome].to_numpy(dtype=object)


def class_counts(ds: Dataset) -> dict[str, int]:
    labels = outcome_labels(ds)
    return {label: int(np.sum(labels == label)) for label in LABELS}


def describe_column(ds: Dataset, name: str) -> ColumnSummary:
    """Min/max/mean/sample sd for numeric columns, level counts otherwise."""
    col = ds.column(name)
    values = ds.frame[name]
    if col.role in (ColumnRole.CATEGORICAL, ColumnRole.IGNORED) or (
        col.role is ColumnRole.OUTCOME and ds.is_labelled
    ):
        counts = values.value_counts(sort=False)
        return ColumnSummary(
            name, level_counts={str(k): int(v) for k, v in sorted(counts.items())}
        )

    x = values.to_numpy(dtype=np.float64)
    sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return ColumnSummary(
        name,
        min=float(np.min(x)),
        max=float(np.max(x)),
        mean=float(np.mean(x)),
        std_dev=sd,
    )


def describe_dataset(ds: Dataset, names: Iterable[str] | None = None) -> list[ColumnSummary]:
    """Table-1 style summary over every non-ignored column."""
    if names is None:
        names = [c.name for c in ds.schema if c.role is not ColumnRole.IGNORED]
    return [describe_column(ds, name) for name in names]
