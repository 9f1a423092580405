"""Experiment stages: data profile, model comparison, feature selection,
class balancing and outlier removal, plus the manifest that records them.

Every stage re-splits the data with the same named sub-seed, so a stage run
on its own sees the same partition it sees inside the full suite.
"""

import logging
import time
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np
import pandas as pd

from classifiers import FittedModel, ModelSpec, predict_scores
from config import FAMILIES, STAGES, ExperimentConfig, derive_seed
from data_model import LEFT, STAYED, Dataset, describe_dataset, load_dataset, map_outcome_labels
from errors import ConfigError, ModelError, ReportError
from feature_selection import (
    FOUR_VARIABLE_SUBSET,
    embedded_rankings,
    rfe,
    subset_columns,
    top5_subset,
)
from metrics import METRIC_NAMES, EvaluationReport, evaluate, labels_from_scores
from preprocess import (
    FeatureTable,
    LeakageAudit,
    SplitSpec,
    assert_disjoint,
    dummy_encode,
    remove_rows,
    stratified_split,
)
from resampling import ResamplePlan
from stats_eda import (
    CHI_SQUARE_FACTORS,
    OUTLIER_COLUMNS,
    chi_square_suite,
    iqr_outliers,
    outlier_suite,
    pearson_correlation_matrix,
)
from tuning import CvSpec, grid_search

logger = logging.getLogger("experiments")

SEED_NAMES = ("split", "folds", "forest", "network", "smote", "under", "svm", "rfe", "importance")
FAMILY_SEED = {"rf": "forest", "ann": "network", "svm": "svm"}

TABLE_MEASURES = ("kappa", "accuracy", "precision", "recall", "f1")
BALANCE_MEASURES = (*TABLE_MEASURES, "roc_auc")

CORRELATION_COLUMNS = (
    "CreditScore",
    "Age",
    "Tenure",
    "Balance",
    "NumOfProducts",
    "HasCrCard",
    "IsActiveMember",
    "EstimatedSalary",
    "Exited",
)

# Settings that change how a run executes but not what it computes.
EXECUTION_ONLY = ("threads", "out_dir")


@dataclass(frozen=True)
class ReportTable:
    """One output table; the first cell of every row is its label."""

    name: str
    caption: str
    header: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.rows), columns=list(self.header))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "caption": self.caption,
            "header": list(self.header),
            "rows": [list(r) for r in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReportTable":
        return cls(
            data["name"],
            data["caption"],
            tuple(data["header"]),
            tuple(tuple(r) for r in data["rows"]),
        )


def _prediction_record(table: FeatureTable, scores: np.ndarray) -> dict:
    return {
        "row_ids": [int(r) for r in table.row_ids],
        "y": [int(v) for v in table.y],
        "scores": [float(s) for s in scores],
    }


@dataclass
class ModelOutcome:
    """A tuned model with its train and test evaluation and raw predictions.

    Training metrics are measured on the rows the model was fitted on (after
    resampling); ``cv_roc_auc`` is the cross-validated ROC of the chosen cell.
    """

    name: str
    family: str
    stage: str
    params: dict[str, Any]
    grid: dict
    train: EvaluationReport
    test: EvaluationReport
    cv_roc_auc: float | None
    train_predictions: dict
    test_predictions: dict
    model: FittedModel

    def measure(self, split: str, metric: str) -> float | None:
        if split == "train" and metric == "roc_auc":
            return self.cv_roc_auc
        report = self.train if split == "train" else self.test
        return getattr(report.metrics, metric)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "stage": self.stage,
            "params": dict(self.params),
            "spec": self.model.spec.to_dict(),
            "grid": self.grid,
            "train": {**self.train.to_dict(), "cv_roc_auc": self.cv_roc_auc},
            "test": self.test.to_dict(),
            "predictions": {"train": self.train_predictions, "test": self.test_predictions},
        }


@dataclass
class StageResult:
    name: str
    models: dict[str, ModelOutcome] = field(default_factory=dict)
    tables: list[ReportTable] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "models": {name: m.to_dict() for name, m in self.models.items()},
            "tables": [t.to_dict() for t in self.tables],
            "extras": self.extras,
        }


@dataclass
class RunManifest:
    config: dict
    seeds: dict[str, int]
    stages: dict[str, dict]

    @property
    def tables(self) -> list[ReportTable]:
        return [
            ReportTable.from_dict(t) for stage in self.stages.values() for t in stage["tables"]
        ]

    def to_dict(self) -> dict:
        return {"config": self.config, "seeds": self.seeds, "stages": self.stages}

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        try:
            return cls(data["config"], data["seeds"], data["stages"])
        except KeyError as e:
            raise ReportError(f"manifest lacks section {e}") from None


@dataclass
class SuiteResult:
    manifest: RunManifest
    timings: dict[str, float]
    models: dict[str, FittedModel]
    dataset: Dataset


@contextmanager
def _timed(timings: dict[str, float], name: str) -> Iterator[None]:
    start = time.perf_counter()
    logger.info(f"Stage {name} started")
    yield
    timings[name] = time.perf_counter() - start
    logger.info(f"Stage {name} finished in {timings[name]:.1f}s")


# --- Data preparation ---


def load_labelled(cfg: ExperimentConfig) -> Dataset:
    if not cfg.data_path:
        raise ConfigError("no data path: pass --data or set CHURN_DATA")
    return map_outcome_labels(load_dataset(cfg.data_path))


def drop_age_outliers(ds: Dataset) -> tuple[Dataset, int]:
    """Remove Stayed rows outside the Age IQR fences of the Stayed class."""
    report = next(
        r for r in iqr_outliers(ds, "Age", by_class=True) if r.class_label != LEFT
    )
    logger.warning(f"Dropping {report.count} Age outliers among Stayed customers")
    return remove_rows(ds, report.outlier_row_indices), report.count


@dataclass(frozen=True)
class StageData:
    train: FeatureTable
    test: FeatureTable
    plan: ResamplePlan | None
    audit: LeakageAudit
    dropped_rows: int = 0

    def select(self, columns: Sequence[str]) -> "StageData":
        return StageData(
            self.train.select(columns),
            self.test.select(columns),
            self.plan,
            self.audit,
            self.dropped_rows,
        )


def prepare_tables(cfg: ExperimentConfig, ds: Dataset) -> StageData:
    """Apply the config's outlier, split, feature and resample modes in order."""
    dropped = 0
    if cfg.outlier_mode == "drop":
        ds, dropped = drop_age_outliers(ds)
    split = SplitSpec(cfg.train_fraction, cfg.seed_for("split"), cfg.stratified)
    train_ds, test_ds = stratified_split(ds, split)
    train, test = dummy_encode(train_ds), dummy_encode(test_ds)
    if cfg.feature_mode == "top5":
        columns = subset_columns(top5_subset())
        train, test = train.select(columns), test.select(columns)
    plan = None
    if cfg.resample_mode != "none":
        plan = ResamplePlan(cfg.resample_mode, seed=cfg.seed_for(cfg.resample_mode))
    audit = assert_disjoint(train, test)
    return StageData(train, test, plan, audit, dropped)


def partition_settings(cfg: ExperimentConfig) -> dict[str, Any]:
    """Everything that decides which rows land in the test split."""
    return {
        "split_seed": cfg.seed_for("split"),
        "train_fraction": cfg.train_fraction,
        "stratified": cfg.stratified,
        "outlier_mode": cfg.outlier_mode,
    }


def check_partition(model: FittedModel, cfg: ExperimentConfig) -> None:
    """Refuse to score a model on a split other than the one it was trained beside."""
    if model.partition is None:
        logger.warning("Model carries no partition record; its test split cannot be checked")
        return
    expected = partition_settings(cfg)
    differing = sorted(k for k in expected if model.partition.get(k) != expected[k])
    if differing:
        detail = ", ".join(
            f"{k}: model {model.partition.get(k)!r} vs config {expected[k]!r}" for k in differing
        )
        raise ModelError(f"model was trained on a different partition ({detail})")


# --- Model training ---


def base_params(cfg: ExperimentConfig, family: str) -> dict[str, Any]:
    if family == "cart":
        return {"min_split": cfg.cart.min_split, "min_leaf": cfg.cart.min_leaf}
    if family == "rf":
        return {"n_trees": cfg.forest.tuning_trees, "min_leaf": cfg.forest.min_leaf}
    if family == "ann":
        return {"max_iter": cfg.network.max_iter, "gtol": cfg.network.gtol}
    if family == "svm":
        return {
            "C": cfg.svm.C,
            "gamma": cfg.svm.gamma,
            "tol": cfg.svm.tol,
            "max_iter": cfg.svm.max_iter,
            "cache_mb": cfg.svm.cache_mb,
        }
    return {}


def family_grid(cfg: ExperimentConfig, family: str, n_columns: int) -> dict[str, list]:
    if family == "svm" and not cfg.tune_svm:
        return {}
    grid = {name: list(values) for name, values in cfg.grids.get(family, {}).items()}
    if family == "rf" and "mtry" in grid:
        grid["mtry"] = [m for m in grid["mtry"] if m <= n_columns] or [n_columns]
    return grid


def family_spec(cfg: ExperimentConfig, family: str) -> ModelSpec:
    return ModelSpec(family, base_params(cfg, family), cfg.seed_for(FAMILY_SEED.get(family, "folds")))


def _short(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def train_family(
    cfg: ExperimentConfig, family: str, data: StageData, name: str, stage: str
) -> ModelOutcome:
    """Tune ``family`` by repeated CV on the training split, refit and evaluate."""
    cv = CvSpec(cfg.cv.folds, cfg.cv.repeats, True, cfg.seed_for("folds"))
    refit = {"n_trees": cfg.forest.n_trees} if family == "rf" else None
    result = grid_search(
        family,
        family_grid(cfg, family, data.train.d),
        data.train,
        cv,
        base=family_spec(cfg, family),
        plan=data.plan,
        refit_params=refit,
        n_jobs=cfg.n_jobs,
    )
    model = replace(result.model, partition=partition_settings(cfg))
    fit_table = result.refit_train
    train_scores = predict_scores(model, fit_table)
    test_scores = predict_scores(model, data.test)
    cv_roc = result.best.summary.get("roc_auc")
    outcome = ModelOutcome(
        name=name,
        family=family,
        stage=stage,
        params=dict(result.best.params),
        grid=result.to_dict(),
        train=evaluate(fit_table.labels, labels_from_scores(train_scores)),
        test=evaluate(data.test.labels, labels_from_scores(test_scores), test_scores),
        cv_roc_auc=None if cv_roc is None else cv_roc[0],
        train_predictions=_prediction_record(fit_table, train_scores),
        test_predictions=_prediction_record(data.test, test_scores),
        model=model,
    )
    logger.info(
        f"{stage}/{name}: test kappa {_short(outcome.test.metrics.kappa)},"
        f" accuracy {_short(outcome.test.metrics.accuracy)}"
    )
    return outcome


# --- Tables ---


def metric_table(
    name: str,
    caption: str,
    outcomes: dict[str, ModelOutcome],
    split: str,
    measures: Sequence[str] = TABLE_MEASURES,
) -> ReportTable:
    """Measures as rows, models as columns."""
    rows = tuple(
        (metric, *(o.measure(split, metric) for o in outcomes.values())) for metric in measures
    )
    return ReportTable(name, caption, ("measure", *outcomes), rows)


def descriptive_table(ds: Dataset) -> ReportTable:
    rows = []
    for summary in describe_dataset(ds):
        if summary.level_counts is None:
            rows.append(
                (summary.name, summary.min, summary.max, summary.mean, summary.std_dev, None)
            )
        else:
            rows.extend(
                (f"{summary.name}: {level}", None, None, None, None, count)
                for level, count in summary.level_counts.items()
            )
    return ReportTable(
        "table1",
        "Descriptive statistics",
        ("variable", "min", "max", "mean", "std_dev", "count"),
        tuple(rows),
    )


def correlation_table(ds: Dataset) -> ReportTable:
    matrix = pearson_correlation_matrix(ds, CORRELATION_COLUMNS)
    rows = tuple(
        (a, *(float(v) for v in matrix.values[i])) for i, a in enumerate(matrix.labels)
    )
    return ReportTable("table2", "Pearson correlation matrix", ("variable", *matrix.labels), rows)


# --- Stages ---


def run_profile(cfg: ExperimentConfig, ds: Dataset | None = None) -> StageResult:
    """Data-only stage: descriptive statistics, correlations, tests, outliers."""
    ds = ds if ds is not None else load_labelled(cfg)
    chi = chi_square_suite(ds)
    outliers = outlier_suite(ds)
    tables = [
        descriptive_table(ds),
        correlation_table(ds),
        ReportTable(
            "chi_square",
            "Chi-square tests of independence with the outcome",
            ("factor", "statistic", "df", "p_value"),
            tuple((r.factor, r.statistic, r.df, r.p_value) for r in chi),
        ),
        ReportTable(
            "outliers",
            "IQR outliers by class (1.5 x IQR fences, linear quartiles)",
            ("column", "class", "fence_low", "fence_high", "count"),
            tuple((r.column, r.class_label, *r.fences, r.count) for r in outliers),
        ),
    ]
    extras = {
        "rows": ds.n,
        "chi_square_factors": list(CHI_SQUARE_FACTORS),
        "outlier_columns": list(OUTLIER_COLUMNS),
        "quartile_method": "linear",
    }
    return StageResult("profile", tables=tables, extras=extras)


def _models(cfg: ExperimentConfig, data: StageData, stage: str, names: dict[str, str]) -> dict[str, ModelOutcome]:
    return {name: train_family(cfg, family, data, name, stage) for name, family in names.items()}


def run_model_comparison(cfg: ExperimentConfig, ds: Dataset | None = None) -> StageResult:
    """All six families on every predictor, no resampling."""
    ds = ds if ds is not None else load_labelled(cfg)
    data = prepare_tables(cfg.with_modes(feature_mode="all", resample_mode="none", outlier_mode="keep"), ds)
    models = _models(cfg, data, "compare", {f: f for f in FAMILIES})
    tables = [
        metric_table("table3", "Performance measures for the training set", models, "train"),
        metric_table("table4", "Performance measures for the test set", models, "test"),
    ]
    return StageResult("compare", models, tables, {"leakage": asdict(data.audit)})


def run_feature_selection(
    cfg: ExperimentConfig,
    ds: Dataset | None = None,
    initial: dict[str, ModelOutcome] | None = None,
) -> StageResult:
    """Importance rankings and RFE on all predictors, then RF and ANN on the top five."""
    ds = ds if ds is not None else load_labelled(cfg)
    data_all = prepare_tables(cfg.with_modes(feature_mode="all", resample_mode="none", outlier_mode="keep"), ds)
    if initial is None:
        initial = _models(cfg, data_all, "select", {"rf": "rf", "ann": "ann"})

    cp = initial["cart"].params.get("cp", 0.01) if "cart" in initial else 0.01
    cart_spec = family_spec(cfg, "cart").with_params(cp=cp)
    rf_spec = ModelSpec(
        "rf",
        {
            "n_trees": cfg.forest.n_trees,
            "mtry": initial["rf"].params.get("mtry", 4),
            "min_leaf": cfg.forest.min_leaf,
        },
        cfg.seed_for("importance"),
    )
    rankings = embedded_rankings(data_all.train, cart_spec, rf_spec, n_jobs=cfg.n_jobs)
    rfe_cv = CvSpec(cfg.rfe.folds, cfg.rfe.repeats, True, cfg.seed_for("rfe"))
    rfe_result = rfe(
        data_all.train,
        cfg.rfe.sizes,
        rfe_cv,
        n_trees=cfg.rfe.n_trees,
        seed=cfg.seed_for("rfe"),
        n_jobs=cfg.n_jobs,
    )

    data_top = prepare_tables(cfg.with_modes(feature_mode="top5", resample_mode="none", outlier_mode="keep"), ds)
    selected = _models(cfg, data_top, "select", {"rf_selected": "rf", "ann_selected": "ann"})
    four = train_family(
        cfg, "rf", data_all.select(subset_columns(FOUR_VARIABLE_SUBSET)), "rf_four_variables", "select"
    )

    models = {
        "rf_initial": initial["rf"],
        "rf_selected": selected["rf_selected"],
        "ann_initial": initial["ann"],
        "ann_selected": selected["ann_selected"],
    }
    variables = list(data_all.train.columns)
    tables = [
        ReportTable(
            "table5",
            "Variable importance by tree-based models",
            ("variable", "cart", "rf_mean_decrease_accuracy", "rf_mean_decrease_gini"),
            tuple(
                (
                    v,
                    rankings.cart.score(v),
                    rankings.rf_accuracy.score(v),
                    rankings.rf_gini.score(v),
                )
                for v in variables
            ),
        ),
        ReportTable(
            "rfe",
            "Recursive feature elimination (random forest, cross-validated)",
            ("size", "accuracy", "kappa"),
            tuple((s, rfe_result.accuracy[s], rfe_result.kappa[s]) for s in rfe_result.sizes),
        ),
        metric_table("table6", "Performance measures following feature selection (training set)", models, "train"),
        metric_table("table7", "Performance measures following feature selection (test set)", models, "test"),
        metric_table(
            "four_variables",
            "Random forest on four predictors (test set)",
            {"rf_four_variables": four},
            "test",
            ("accuracy", "kappa"),
        ),
    ]
    extras = {
        "rankings": rankings.to_dict(),
        "rfe": rfe_result.to_dict(),
        "top5": list(top5_subset()),
    }
    return StageResult("select", {**models, "rf_four_variables": four}, tables, extras)


def run_imbalance(
    cfg: ExperimentConfig,
    ds: Dataset | None = None,
    initial: dict[str, ModelOutcome] | None = None,
) -> StageResult:
    """RF and ANN on the top five predictors with under-sampling and with SMOTE."""
    ds = ds if ds is not None else load_labelled(cfg)
    if initial is None:
        data = prepare_tables(cfg.with_modes(feature_mode="top5", resample_mode="none", outlier_mode="keep"), ds)
        initial = _models(cfg, data, "balance", {"rf": "rf", "ann": "ann"})

    balanced: dict[str, ModelOutcome] = {}
    for mode in ("under", "smote"):
        data = prepare_tables(cfg.with_modes(feature_mode="top5", resample_mode=mode, outlier_mode="keep"), ds)
        balanced.update(_models(cfg, data, "balance", {f"rf_{mode}": "rf", f"ann_{mode}": "ann"}))

    models = {
        "rf_initial": initial["rf"],
        "rf_under": balanced["rf_under"],
        "rf_smote": balanced["rf_smote"],
        "ann_initial": initial["ann"],
        "ann_under": balanced["ann_under"],
        "ann_smote": balanced["ann_smote"],
    }
    tables = [
        metric_table("table8", "Performance measures following balancing data (training set)", models, "train", BALANCE_MEASURES),
        metric_table("table9", "Performance measures following balancing data (test set)", models, "test", BALANCE_MEASURES),
    ]
    return StageResult("balance", models, tables)


def run_outlier_ablation(
    cfg: ExperimentConfig,
    ds: Dataset | None = None,
    initial: dict[str, ModelOutcome] | None = None,
) -> StageResult:
    """Top five + SMOTE with the Stayed Age outliers removed before splitting."""
    ds = ds if ds is not None else load_labelled(cfg)
    if initial is None:
        data = prepare_tables(cfg.with_modes(feature_mode="top5", resample_mode="smote", outlier_mode="keep"), ds)
        initial = _models(cfg, data, "outliers", {"rf": "rf", "ann": "ann"})

    data = prepare_tables(cfg.with_modes(feature_mode="top5", resample_mode="smote", outlier_mode="drop"), ds)
    cleaned = _models(cfg, data, "outliers", {"rf_cleaned": "rf", "ann_cleaned": "ann"})
    models = {
        "rf_initial": initial["rf"],
        "rf_cleaned": cleaned["rf_cleaned"],
        "ann_initial": initial["ann"],
        "ann_cleaned": cleaned["ann_cleaned"],
    }
    tables = [
        metric_table("table10", "Performance measures in the absence of outliers (training set)", models, "train", BALANCE_MEASURES),
        metric_table("table11", "Performance measures in the absence of outliers (test set)", models, "test", BALANCE_MEASURES),
    ]
    extras = {"dropped_rows": data.dropped_rows, "rows_after": ds.n - data.dropped_rows}
    return StageResult("outliers", models, tables, extras)


# Models each stage hands to the next as its "initial" column.
_HANDOFF = {
    "compare": {"rf": "rf", "ann": "ann", "cart": "cart"},
    "select": {"rf": "rf_selected", "ann": "ann_selected"},
    "balance": {"rf": "rf_smote", "ann": "ann_smote"},
}

_STAGE_RUNNERS = {
    "select": run_feature_selection,
    "balance": run_imbalance,
    "outliers": run_outlier_ablation,
}


def manifest_config(cfg: ExperimentConfig) -> dict:
    """The config echo: everything that affects results."""
    echo = cfg.to_dict()
    for key in EXECUTION_ONLY:
        echo.pop(key, None)
    return echo


def run_suite(cfg: ExperimentConfig, stages: Sequence[str] = STAGES) -> SuiteResult:
    """Profile plus the requested stages in their fixed order."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stage(s): {sorted(unknown)}")
    ds = load_labelled(cfg)
    timings: dict[str, float] = {}
    results: dict[str, StageResult] = {}

    with _timed(timings, "profile"):
        results["profile"] = run_profile(cfg, ds)

    previous: StageResult | None = None
    for stage in STAGES:
        if stage not in stages:
            previous = None
            continue
        with _timed(timings, stage):
            if stage == "compare":
                result = run_model_comparison(cfg, ds)
            else:
                handoff = None
                if previous is not None:
                    keys = _HANDOFF[previous.name]
                    handoff = {k: previous.models[v] for k, v in keys.items()}
                result = _STAGE_RUNNERS[stage](cfg, ds, handoff)
        results[stage] = result
        previous = result

    manifest = RunManifest(
        config=manifest_config(cfg),
        seeds={name: derive_seed(cfg.seed, name) for name in SEED_NAMES},
        stages={name: r.to_dict() for name, r in results.items()},
    )
    models = {
        f"{r.name}-{name}": outcome.model
        for r in results.values()
        for name, outcome in r.models.items()
        if outcome.stage == r.name
    }
    return SuiteResult(manifest, timings, models, ds)


# --- Audit ---


@dataclass
class AuditReport:
    checked: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _close(a: float | None, b: float | None, tol: float = 1e-12) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol


def _labels(y: list[int]) -> np.ndarray:
    return np.where(np.asarray(y) == 1, LEFT, STAYED).astype(object)


def audit_manifest(manifest: RunManifest) -> AuditReport:
    """Recompute every stored metric from the stored predictions and fold scores."""
    audit = AuditReport()
    for stage_name, stage in manifest.stages.items():
        for model_name, model in stage["models"].items():
            where = f"{stage_name}/{model_name}"
            for split in ("train", "test"):
                record = model["predictions"][split]
                scores = np.asarray(record["scores"], dtype=np.float64)
                recomputed = evaluate(
                    _labels(record["y"]),
                    labels_from_scores(scores),
                    scores if split == "test" else None,
                )
                stored = model[split]["metrics"]
                for metric in METRIC_NAMES:
                    audit.checked += 1
                    if not _close(getattr(recomputed.metrics, metric), stored[metric]):
                        audit.mismatches.append(f"{where} {split} {metric}")
            best = model["grid"]["best"]
            for cell in model["grid"]["cells"]:
                if cell["error"] is not None or cell["params"] != best:
                    continue
                folds = [f["accuracy"] for f in cell["folds"]]
                audit.checked += 1
                if not _close(float(np.sum(folds) / len(folds)), cell["summary"]["accuracy"]["mean"], 1e-9):
                    audit.mismatches.append(f"{where} cv accuracy mean")
        rfe_result = stage.get("extras", {}).get("rfe")
        if rfe_result:
            size = str(rfe_result["chosen_size"])
            folds = rfe_result["fold_accuracy"][size]
            audit.checked += 1
            if not _close(float(np.sum(folds) / len(folds)), rfe_result["accuracy"][size], 1e-9):
                audit.mismatches.append(f"{stage_name} rfe best accuracy")
    if audit.mismatches:
        logger.error(f"Manifest audit found {len(audit.mismatches)} mismatches")
    return audit
