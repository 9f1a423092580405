"""Encoding, scaling, normality transform, stratified split and row removal.

Every fitted spec is learned from training rows only and is immutable.
"""

import hashlib
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from data_model import LABELS, LEFT, ColumnRole, Dataset, outcome_labels
from errors import PreprocessError

logger = logging.getLogger("preprocess")

SYNTHETIC_ROW = -1

# Per-family preparation applied after dummy encoding.
FAMILY_TRANSFORM = {
    "gnb": "yeojohnson",
    "knn": "zscore",
    "svm": "zscore",
    "ann": "minmax",
    "cart": None,
    "rf": None,
}


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Model-ready numeric matrix with labels and provenance.

    ``row_ids`` holds the original dataset row of each row, or -1 for
    synthetic rows; ``transforms`` records the preparation chain and feeds the
    fingerprint that fitted models check at predict time.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray | None = None
    row_ids: np.ndarray | None = None
    transforms: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise PreprocessError(
                f"values shape {values.shape} does not match {len(self.columns)} columns"
            )
        object.__setattr__(self, "values", values)
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(len(values), dtype=np.int64))
        if self.labels is not None and len(self.labels) != len(values):
            raise PreprocessError("labels and values differ in length")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def y(self) -> np.ndarray:
        """1 for Left, 0 for Stayed."""
        if self.labels is None:
            raise PreprocessError("table carries no labels")
        return (self.labels == LEFT).astype(np.int64)

    @property
    def fingerprint(self) -> str:
        payload = json.dumps([list(self.columns), list(self.transforms)])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise PreprocessError(f"unknown feature column {name!r}") from None

    def select(self, columns: Sequence[str]) -> "FeatureTable":
        idx = [self.column_index(c) for c in columns]
        return FeatureTable(
            tuple(columns), self.values[:, idx], self.labels, self.row_ids, self.transforms
        )

    def take(self, positions: Sequence[int] | np.ndarray) -> "FeatureTable":
        positions = np.asarray(positions, dtype=np.int64)
        return FeatureTable(
            self.columns,
            self.values[positions],
            None if self.labels is None else self.labels[positions],
            self.row_ids[positions],
            self.transforms,
        )

    def with_labels(self, labels: np.ndarray) -> "FeatureTable":
        return FeatureTable(
            self.columns, self.values, np.asarray(labels, dtype=object), self.row_ids, self.transforms
        )

    def transformed(self, values: np.ndarray, tag: str) -> "FeatureTable":
        return FeatureTable(
            self.columns, values, self.labels, self.row_ids, (*self.transforms, tag)
        )


def binary_columns(table: FeatureTable) -> list[int]:
    """Indices of columns whose values are all 0 or 1."""
    return [
        j for j in range(table.d) if np.isin(table.values[:, j], (0.0, 1.0)).all()
    ]


# --- Dummy encoding ---


@dataclass(frozen=True)
class EncoderSpec:
    """Reference (dropped) level and full level order per categorical column."""

    reference_levels: dict[str, str]
    levels: dict[str, tuple[str, ...]]

    def dummy_names(self, factor: str) -> list[str]:
        ref = self.reference_levels[factor]
        return [f"{factor}{level}" for level in self.levels[factor] if level != ref]

    def to_dict(self) -> dict:
        return {
            "reference_levels": dict(self.reference_levels),
            "levels": {k: list(v) for k, v in self.levels.items()},
        }


CHURN_ENCODER = EncoderSpec(
    reference_levels={"Geography": "France", "Gender": "Female"},
    levels={"Geography": ("France", "Germany", "Spain"), "Gender": ("Female", "Male")},
)


def encoded_columns(ds: Dataset, spec: EncoderSpec = CHURN_ENCODER) -> list[str]:
    """Model column names produced by ``dummy_encode`` in output order."""
    names = []
    for name in ds.predictors:
        if ds.column(name).role is ColumnRole.CATEGORICAL:
            names.extend(spec.dummy_names(name))
        else:
            names.append(name)
    return names


def dummy_encode(ds: Dataset, spec: EncoderSpec = CHURN_ENCODER) -> FeatureTable:
    """Replace each k-level factor by k-1 indicator columns, in place."""
    blocks = []
    for name in ds.predictors:
        col = ds.column(name)
        values = ds.frame[name]
        if col.role is not ColumnRole.CATEGORICAL:
            blocks.append(values.to_numpy(dtype=np.float64)[:, None])
            continue
        if name not in spec.reference_levels:
            raise PreprocessError(f"encoder has no entry for categorical column {name!r}")
        unseen = sorted(set(values.unique()) - set(spec.levels[name]))
        if unseen:
            raise PreprocessError(f"unseen level(s) {unseen} in column {name!r}")
        ref = spec.reference_levels[name]
        for level in spec.levels[name]:
            if level != ref:
                blocks.append((values.to_numpy() == level).astype(np.float64)[:, None])

    return FeatureTable(
        columns=tuple(encoded_columns(ds, spec)),
        values=np.hstack(blocks),
        labels=outcome_labels(ds),
        row_ids=ds.row_ids,
        transforms=("dummies",),
    )


def decode_level(spec: EncoderSpec, factor: str, dummy_values: Sequence[float]) -> str:
    """Recover the original level from one row's dummy pattern."""
    names = spec.dummy_names(factor)
    if len(dummy_values) != len(names):
        raise PreprocessError(f"{factor} expects {len(names)} dummies, got {len(dummy_values)}")
    hot = [i for i, v in enumerate(dummy_values) if v == 1.0]
    if not hot:
        return spec.reference_levels[factor]
    if len(hot) > 1:
        raise PreprocessError(f"invalid dummy pattern {list(dummy_values)} for {factor}")
    return names[hot[0]][len(factor):]


# --- Scaling ---


@dataclass(frozen=True)
class ScalerSpec:
    kind: str
    columns: tuple[str, ...]
    center: tuple[float, ...]
    scale: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "columns": list(self.columns),
            "center": list(self.center),
            "scale": list(self.scale),
        }


def fit_scaler(train: FeatureTable, kind: str) -> ScalerSpec:
    """z-score (mean / sample sd) or min-max (min / range) per column."""
    X = train.values
    if kind == "zscore":
        center = X.mean(axis=0)
        scale = X.std(axis=0, ddof=1) if train.n > 1 else np.zeros(train.d)
    elif kind == "minmax":
        center = X.min(axis=0)
        scale = X.max(axis=0) - center
    else:
        raise PreprocessError(f"unknown scaler kind {kind!r}")

    flat = np.flatnonzero(~(scale > 0))
    if flat.size:
        raise PreprocessError(
            f"cannot {kind}-scale constant column {train.columns[flat[0]]!r}"
        )
    return ScalerSpec(kind, train.columns, tuple(map(float, center)), tuple(map(float, scale)))


def apply_scaler(spec: ScalerSpec, table: FeatureTable) -> FeatureTable:
    if table.columns != spec.columns:
        raise PreprocessError(
            f"scaler fitted on {list(spec.columns)}, table has {list(table.columns)}"
        )
    values = (table.values - np.asarray(spec.center)) / np.asarray(spec.scale)
    if spec.kind == "minmax":
        values = np.clip(values, 0.0, 1.0)
    return table.transformed(values, spec.kind)


# --- Yeo-Johnson ---


@dataclass(frozen=True)
class PowerTransformSpec:
    columns: tuple[str, ...]
    lambdas: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "lambdas": list(self.lambdas)}


def continuous_columns(table: FeatureTable) -> list[str]:
    binary = set(binary_columns(table))
    return [c for j, c in enumerate(table.columns) if j not in binary]


def fit_power_transform(
    train: FeatureTable, columns: Sequence[str] | None = None
) -> PowerTransformSpec:
    """Maximum-likelihood Yeo-Johnson exponent per column."""
    if columns is None:
        columns = continuous_columns(train)
    lambdas = []
    for name in columns:
        x = train.values[:, train.column_index(name)]
        with np.errstate(all="ignore"):
            lmbda = float(stats.yeojohnson_normmax(x))
            llf = float(stats.yeojohnson_llf(lmbda, x))
        if not (np.isfinite(lmbda) and np.isfinite(llf)):
            raise PreprocessError(f"Yeo-Johnson likelihood not finite for {name!r}")
        lambdas.append(lmbda)
    logger.debug(f"Yeo-Johnson lambdas: {dict(zip(columns, lambdas, strict=True))}")
    return PowerTransformSpec(tuple(columns), tuple(lambdas))


def apply_power_transform(spec: PowerTransformSpec, table: FeatureTable) -> FeatureTable:
    values = table.values.copy()
    for name, lmbda in zip(spec.columns, spec.lambdas, strict=True):
        j = table.column_index(name)
        values[:, j] = stats.yeojohnson(values[:, j], lmbda=lmbda)
    return table.transformed(values, "yeojohnson")


# --- Per-family preparation ---


@dataclass(frozen=True)
class FamilyPreprocessor:
    """The fitted preparation one classifier family expects."""

    family: str
    scaler: ScalerSpec | None = None
    power: PowerTransformSpec | None = None

    def apply(self, table: FeatureTable) -> FeatureTable:
        if self.power is not None:
            table = apply_power_transform(self.power, table)
        if self.scaler is not None:
            table = apply_scaler(self.scaler, table)
        return table

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "power": None if self.power is None else self.power.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FamilyPreprocessor":
        scaler = data.get("scaler")
        power = data.get("power")
        return cls(
            family=data["family"],
            scaler=None
            if scaler is None
            else ScalerSpec(
                scaler["kind"],
                tuple(scaler["columns"]),
                tuple(scaler["center"]),
                tuple(scaler["scale"]),
            ),
            power=None
            if power is None
            else PowerTransformSpec(tuple(power["columns"]), tuple(power["lambdas"])),
        )


def fit_family_preprocessor(family: str, train: FeatureTable) -> FamilyPreprocessor:
    if family not in FAMILY_TRANSFORM:
        raise PreprocessError(f"unknown model family {family!r}")
    kind = FAMILY_TRANSFORM[family]
    if kind == "yeojohnson":
        return FamilyPreprocessor(family, power=fit_power_transform(train))
    if kind in ("zscore", "minmax"):
        return FamilyPreprocessor(family, scaler=fit_scaler(train, kind))
    return FamilyPreprocessor(family)


# --- Splitting and row removal ---


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def to_dict(self) -> dict:
        return {
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "stratified": self.stratified,
        }


def _allocate(class_sizes: list[int], total: int) -> list[int]:
    """Largest-remainder allocation of ``total`` rows proportional to class sizes."""
    n = sum(class_sizes)
    ideal = [size * total / n for size in class_sizes]
    counts = [int(np.floor(v)) for v in ideal]
    remainders = sorted(
        range(len(ideal)), key=lambda i: (-(ideal[i] - counts[i]), i)
    )
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


def split_positions(
    labels: np.ndarray, spec: SplitSpec
) -> tuple[np.ndarray, np.ndarray]:
    n = len(labels)
    if n < 10:
        raise PreprocessError(f"need at least 10 rows to split, got {n}")
    if not 0.0 < spec.train_fraction < 1.0:
        raise PreprocessError(f"train fraction must lie in (0, 1), got {spec.train_fraction}")
    rng = np.random.default_rng(spec.seed)
    n_train = round(spec.train_fraction * n)

    if not spec.stratified:
        order = rng.permutation(n)
        return np.sort(order[:n_train]), np.sort(order[n_train:])

    groups = [np.flatnonzero(labels == label) for label in LABELS]
    for label, group in zip(LABELS, groups, strict=True):
        if len(group) < 2:
            raise PreprocessError(f"class {label} has fewer than 2 rows; cannot stratify")
    train_parts, test_parts = [], []
    for group, k in zip(groups, _allocate([len(g) for g in groups], n_train), strict=True):
        shuffled = rng.permutation(group)
        train_parts.append(shuffled[:k])
        test_parts.append(shuffled[k:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def stratified_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded train/test partition with per-class proportions preserved."""
    train_pos, test_pos = split_positions(outcome_labels(ds), spec)
    logger.info(
        f"Split {ds.n} rows into {len(train_pos)} train / {len(test_pos)} test"
        f" (seed {spec.seed})"
    )
    return ds.subset(train_pos), ds.subset(test_pos)


def remove_rows(ds: Dataset, indices: Sequence[int]) -> Dataset:
    """Drop rows by position; removing every row is an error."""
    drop = np.unique(np.asarray(list(indices), dtype=np.int64))
    if drop.size and (drop.min() < 0 or drop.max() >= ds.n):
        raise PreprocessError(f"row index out of range for dataset of {ds.n} rows")
    if drop.size == ds.n:
        raise PreprocessError("removing every row would leave an empty dataset")
    keep = np.setdiff1d(np.arange(ds.n), drop)
    if drop.size:
        logger.info(f"Removed {drop.size} rows, {keep.size} remain")
    return ds.subset(keep)


@dataclass(frozen=True)
class LeakageAudit:
    train_rows: int
    test_rows: int


def assert_disjoint(train: FeatureTable, test: FeatureTable) -> LeakageAudit:
    """Fail if any real (non-synthetic) row appears on both sides."""
    train_ids = train.row_ids[train.row_ids != SYNTHETIC_ROW]
    test_ids = test.row_ids[test.row_ids != SYNTHETIC_ROW]
    shared = np.intersect1d(train_ids, test_ids)
    if shared.size:
        logger.error(f"{shared.size} test rows leaked into training data")
        raise PreprocessError(f"test rows leaked into training data: {shared[:5].tolist()}")
    return LeakageAudit(int(train_ids.size), int(test_ids.size))
