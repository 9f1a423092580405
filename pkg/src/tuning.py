"""Repeated stratified k-fold cross-validation and grid search."""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from joblib import Parallel, delayed

from classifiers import FittedModel, ModelSpec, fit_pipeline, predict_scores
from data_model import LABELS
from errors import ChurnError, TuningError
from metrics import evaluate, labels_from_scores
from preprocess import FeatureTable
from resampling import ResamplePlan, resample

logger = logging.getLogger("tuning")

CV_METRICS = ("accuracy", "kappa", "roc_auc")

# In priority order. +1: smaller value is the simpler model; -1: larger value is.
SIMPLICITY = {"k": 1, "size": 1, "decay": -1, "mtry": 1, "cp": -1}


@dataclass(frozen=True)
class CvSpec:
    folds: int = 10
    repeats: int = 3
    stratified: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "repeats": self.repeats,
            "stratified": self.stratified,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Partition:
    repeat: int
    fold: int
    train: np.ndarray
    validation: np.ndarray


def cv_partitions(labels: np.ndarray, cv: CvSpec) -> list[Partition]:
    """Fold assignment for every repeat.

    Rows of each class are shuffled and dealt round-robin, continuing the
    deal across classes, so fold sizes differ by at most one and class
    proportions are kept.
    """
    labels = np.asarray(labels, dtype=object)
    n = len(labels)
    if cv.folds < 2:
        raise TuningError(f"need at least 2 folds, got {cv.folds}")
    if cv.repeats < 1:
        raise TuningError(f"need at least 1 repeat, got {cv.repeats}")
    if n < cv.folds:
        raise TuningError(f"{n} rows cannot fill {cv.folds} folds")
    if cv.stratified:
        for label in LABELS:
            count = int(np.sum(labels == label))
            if count < cv.folds:
                raise TuningError(
                    f"class {label} has {count} rows, fewer than {cv.folds} folds"
                )

    partitions = []
    for r in range(cv.repeats):
        rng = np.random.default_rng(np.random.SeedSequence(cv.seed, spawn_key=(r,)))
        if cv.stratified:
            order = np.concatenate(
                [rng.permutation(np.flatnonzero(labels == label)) for label in LABELS]
            )
        else:
            order = rng.permutation(n)
        assignment = np.empty(n, dtype=np.int64)
        assignment[order] = np.arange(n) % cv.folds
        for f in range(cv.folds):
            partitions.append(
                Partition(r, f, np.flatnonzero(assignment != f), np.flatnonzero(assignment == f))
            )
    return partitions


@dataclass(frozen=True)
class FoldScore:
    repeat: int
    fold: int
    accuracy: float
    kappa: float
    roc_auc: float | None

    def to_dict(self) -> dict:
        return {
            "repeat": self.repeat,
            "fold": self.fold,
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "roc_auc": self.roc_auc,
        }


def _summarize(scores: list[FoldScore]) -> dict[str, tuple[float, float]]:
    """(mean, sd) per metric, summed in (repeat, fold) order."""
    ordered = sorted(scores, key=lambda s: (s.repeat, s.fold))
    summary = {}
    for metric in CV_METRICS:
        values = np.array(
            [getattr(s, metric) for s in ordered if getattr(s, metric) is not None], dtype=np.float64
        )
        if values.size == 0:
            continue
        sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        summary[metric] = (float(np.sum(values) / values.size), sd)
    return summary


@dataclass(frozen=True)
class CvResult:
    spec: ModelSpec
    fold_scores: tuple[FoldScore, ...]

    @property
    def summary(self) -> dict[str, tuple[float, float]]:
        return _summarize(list(self.fold_scores))

    def mean(self, metric: str) -> float:
        return self.summary[metric][0]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "summary": {k: {"mean": m, "sd": s} for k, (m, s) in self.summary.items()},
            "folds": [s.to_dict() for s in self.fold_scores],
        }


def _score_fold(
    spec: ModelSpec, table: FeatureTable, part: Partition, plan: ResamplePlan | None
) -> FoldScore:
    fold_plan = None if plan is None else plan.for_fold(part.repeat, part.fold)
    train = resample(table.take(part.train), fold_plan)
    model, _ = fit_pipeline(spec, train)
    validation = table.take(part.validation)
    scores = predict_scores(model, validation)
    report = evaluate(validation.labels, labels_from_scores(scores), scores)
    kappa = report.metrics.kappa
    return FoldScore(
        part.repeat,
        part.fold,
        float(report.metrics.accuracy),
        0.0 if kappa is None else float(kappa),
        report.metrics.roc_auc,
    )


def _score_fold_safe(
    spec: ModelSpec, table: FeatureTable, part: Partition, plan: ResamplePlan | None
) -> FoldScore | str:
    try:
        return _score_fold(spec, table, part, plan)
    except ChurnError as e:
        return f"{type(e).__name__}: {e}"


def cv_evaluate(
    spec: ModelSpec,
    train: FeatureTable,
    cv: CvSpec,
    plan: ResamplePlan | None = None,
    n_jobs: int = 1,
) -> CvResult:
    """Score ``spec`` on every fold; preparation and resampling are fitted per fold."""
    partitions = cv_partitions(train.labels, cv)
    scores = Parallel(n_jobs=n_jobs)(
        delayed(_score_fold)(spec, train, part, plan) for part in partitions
    )
    return CvResult(spec, tuple(scores))


# --- Grid search ---


def expand_grid(grid: dict[str, list]) -> list[dict[str, Any]]:
    """Every combination of the grid values; an empty grid is one default cell."""
    for name, values in grid.items():
        if len(values) == 0:
            raise TuningError(f"grid parameter {name!r} has no values")
    names = list(grid)
    return [dict(zip(names, combo, strict=True)) for combo in itertools.product(*grid.values())]


@dataclass
class GridCell:
    params: dict[str, Any]
    fold_scores: list[FoldScore] = field(default_factory=list)
    error: str | None = None

    @property
    def summary(self) -> dict[str, tuple[float, float]]:
        return _summarize(self.fold_scores)

    @property
    def mean_accuracy(self) -> float:
        return self.summary["accuracy"][0]

    def simplicity_key(self) -> tuple:
        """Sort key: simpler cells first, then lexicographic."""
        ranked = tuple(
            SIMPLICITY[name] * self.params[name]
            for name in SIMPLICITY
            if name in self.params
        )
        return ranked, repr(sorted(self.params.items()))

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "error": self.error,
            "summary": {k: {"mean": m, "sd": s} for k, (m, s) in self.summary.items()},
            "folds": [s.to_dict() for s in self.fold_scores],
        }


def _rank_key(cell: GridCell) -> tuple:
    # rounding absorbs summation noise so equal accuracies tie
    return -round(cell.mean_accuracy, 12), cell.simplicity_key()


@dataclass
class GridResult:
    family: str
    cells: list[GridCell]
    best_index: int
    model: FittedModel
    refit_train: FeatureTable
    cv: CvSpec

    @property
    def best(self) -> GridCell:
        return self.cells[self.best_index]

    def ranked(self) -> list[GridCell]:
        """Successful cells, best first."""
        ok = [c for c in self.cells if c.error is None]
        return sorted(ok, key=_rank_key)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "cv": self.cv.to_dict(),
            "best": dict(self.best.params),
            "cells": [c.to_dict() for c in self.cells],
        }


def grid_search(
    family: str,
    grid: dict[str, list],
    train: FeatureTable,
    cv: CvSpec,
    *,
    base: ModelSpec | None = None,
    plan: ResamplePlan | None = None,
    refit_params: dict[str, Any] | None = None,
    n_jobs: int = 1,
) -> GridResult:
    """Score every cell on identical folds, pick the best by mean accuracy, refit.

    Ties go to the simpler cell (smaller k or network, higher decay or cp,
    lower mtry). A cell whose fit fails on any fold is recorded with its error;
    only an all-failing grid raises. The refit uses every training row (after
    ``plan`` resampling) with ``refit_params`` laid over the best cell.
    """
    base = base or ModelSpec(family)
    if base.family != family:
        raise TuningError(f"base spec family {base.family!r} differs from {family!r}")
    cells = [GridCell(params) for params in expand_grid(grid)]
    for cell in cells:
        base.with_params(**cell.params).resolved()
    partitions = cv_partitions(train.labels, cv)

    jobs = [(c, p) for c in range(len(cells)) for p in range(len(partitions))]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_score_fold_safe)(base.with_params(**cells[c].params), train, partitions[p], plan)
        for c, p in jobs
    )
    for (c, _), result in zip(jobs, results, strict=True):
        cell = cells[c]
        if isinstance(result, str):
            if cell.error is None:
                cell.error = result
                logger.warning(f"{family} cell {cell.params} failed: {result}")
        else:
            cell.fold_scores.append(result)
    for cell in cells:
        if cell.error is not None:
            cell.fold_scores.clear()

    ok = [c for c in cells if c.error is None]
    if not ok:
        logger.error(f"every {family} grid cell failed")
        raise TuningError(f"every {family} grid cell failed; first error: {cells[0].error}")
    best_cell = min(ok, key=_rank_key)
    best_index = cells.index(best_cell)
    logger.info(
        f"{family}: best {best_cell.params or 'defaults'} "
        f"(cv accuracy {best_cell.mean_accuracy:.4f} over {len(partitions)} folds)"
    )

    refit_spec = base.with_params(**best_cell.params, **(refit_params or {}))
    refit_train = resample(train, plan)
    model, _ = fit_pipeline(refit_spec, refit_train, n_jobs=n_jobs)
    return GridResult(family, cells, best_index, model, refit_train, cv)
