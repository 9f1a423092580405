"""Tree-based importance rankings and recursive feature elimination."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from classifiers import (
    ImportanceRanking,
    ModelSpec,
    fit_model,
    predict_scores,
    rf_importance,
    tree_importance,
)
from errors import ChurnError, TuningError
from metrics import evaluate, labels_from_scores
from preprocess import CHURN_ENCODER, EncoderSpec, FeatureTable
from tuning import CvSpec, Partition, cv_partitions

logger = logging.getLogger("feature_selection")

TOP5_SUBSET = ("Age", "NumOfProducts", "IsActiveMember", "Balance", "Geography")
FOUR_VARIABLE_SUBSET = ("Age", "NumOfProducts", "IsActiveMember", "Balance")


def top5_subset() -> tuple[str, ...]:
    """The five predictors kept after feature selection."""
    return TOP5_SUBSET


def subset_columns(names: Sequence[str], encoder: EncoderSpec = CHURN_ENCODER) -> list[str]:
    """Expand predictor names to model columns (a factor becomes its dummies)."""
    columns = []
    for name in names:
        if name in encoder.reference_levels:
            columns.extend(encoder.dummy_names(name))
        else:
            columns.append(name)
    return columns


def predictor_groups(
    columns: Sequence[str], encoder: EncoderSpec = CHURN_ENCODER
) -> dict[str, list[str]]:
    """Model columns grouped by the predictor they came from, in column order."""
    owner = {
        dummy: factor for factor in encoder.reference_levels for dummy in encoder.dummy_names(factor)
    }
    groups: dict[str, list[str]] = {}
    for column in columns:
        groups.setdefault(owner.get(column, column), []).append(column)
    return groups


# --- Embedded rankings ---


@dataclass(frozen=True)
class EmbeddedRankings:
    cart: ImportanceRanking
    rf_accuracy: ImportanceRanking
    rf_gini: ImportanceRanking

    def to_dict(self) -> dict:
        return {
            "cart": self.cart.to_dict(),
            "rf_mean_decrease_accuracy": self.rf_accuracy.to_dict(),
            "rf_mean_decrease_gini": self.rf_gini.to_dict(),
        }


def embedded_rankings(
    train: FeatureTable, cart_spec: ModelSpec, rf_spec: ModelSpec, n_jobs: int = 1
) -> EmbeddedRankings:
    """CART impurity ranking plus both random-forest rankings on ``train``."""
    cart = tree_importance(fit_model(cart_spec, train))
    forest = fit_model(rf_spec, train, n_jobs=n_jobs)
    mda, mdg = rf_importance(forest, train, oob=True)
    logger.info(f"Embedded rankings: CART top {cart.top(3)}, RF top {mda.top(3)}")
    return EmbeddedRankings(cart, mda, mdg)


# --- Recursive feature elimination ---


@dataclass(frozen=True)
class RfeResult:
    sizes: tuple[int, ...]
    accuracy: dict[int, float]
    kappa: dict[int, float]
    fold_accuracy: dict[int, tuple[float, ...]]
    chosen_size: int
    chosen_variables: tuple[str, ...]

    @property
    def best_accuracy(self) -> float:
        return self.accuracy[self.chosen_size]

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "accuracy": {str(k): v for k, v in self.accuracy.items()},
            "kappa": {str(k): v for k, v in self.kappa.items()},
            "fold_accuracy": {str(k): list(v) for k, v in self.fold_accuracy.items()},
            "chosen_size": self.chosen_size,
            "chosen_variables": list(self.chosen_variables),
        }


def _forest_spec(
    groups: list[str], all_groups: dict[str, list[str]], n_trees: int, seed: int
) -> tuple[ModelSpec, list[str]]:
    """Forest over the given predictors with mtry = floor(sqrt(column count))."""
    columns = [c for g in groups for c in all_groups[g]]
    mtry = max(1, math.floor(math.sqrt(len(columns))))
    return ModelSpec("rf", {"n_trees": n_trees, "mtry": mtry}, seed), columns


def _group_scores(
    ranking: ImportanceRanking, groups: list[str], all_groups: dict[str, list[str]]
) -> dict[str, float]:
    return {g: sum(ranking.score(c) for c in all_groups[g]) for g in groups}


def _eliminate(
    train: FeatureTable,
    validation: FeatureTable | None,
    all_groups: dict[str, list[str]],
    sizes: list[int],
    n_trees: int,
    seed: int,
) -> tuple[dict[int, tuple[float, float]], dict[int, list[str]]]:
    """Walk sizes from largest to smallest, re-ranking on each reduced set.

    Returns per-size (accuracy, kappa) on ``validation`` (empty when None)
    and the predictor set retained at each size.
    """
    current = list(all_groups)
    scores: dict[int, tuple[float, float]] = {}
    kept: dict[int, list[str]] = {}
    for size in sorted(sizes, reverse=True):
        current = current[:size]
        kept[size] = list(current)
        spec, columns = _forest_spec(current, all_groups, n_trees, seed)
        model = fit_model(spec, train.select(columns))
        if validation is not None:
            sub = validation.select(columns)
            probs = predict_scores(model, sub)
            report = evaluate(sub.labels, labels_from_scores(probs))
            kappa = report.metrics.kappa
            scores[size] = (float(report.metrics.accuracy), 0.0 if kappa is None else float(kappa))
        if size > 1:
            mda, _ = rf_importance(model, train.select(columns), oob=True)
            group_scores = _group_scores(mda, current, all_groups)
            # stable: ties keep the previous order
            current = sorted(current, key=lambda g: -group_scores[g])
    return scores, kept


def _rfe_fold(
    table: FeatureTable,
    part: Partition,
    all_groups: dict[str, list[str]],
    sizes: list[int],
    n_trees: int,
    seed: int,
) -> dict[int, tuple[float, float]]:
    fold_seed = int(
        np.random.SeedSequence(seed, spawn_key=(part.repeat, part.fold)).generate_state(1, dtype=np.uint64)[0]
    )
    scores, _ = _eliminate(
        table.take(part.train), table.take(part.validation), all_groups, sizes, n_trees, fold_seed
    )
    return scores


def rfe(
    train: FeatureTable,
    sizes: Sequence[int],
    cv: CvSpec,
    *,
    encoder: EncoderSpec = CHURN_ENCODER,
    n_trees: int = 100,
    seed: int = 0,
    n_jobs: int = 1,
) -> RfeResult:
    """Backward elimination over predictor groups with a random forest.

    Every resample ranks the predictors by out-of-bag permutation importance
    on its own training rows and re-ranks after each elimination step. The
    chosen size has the highest mean CV accuracy (ties go to the smaller
    size); the chosen set comes from the same elimination on all of ``train``.
    """
    all_groups = predictor_groups(train.columns, encoder)
    sizes = sorted(set(int(s) for s in sizes))
    if not sizes:
        raise TuningError("RFE needs at least one subset size")
    if sizes[0] < 1 or sizes[-1] > len(all_groups):
        raise TuningError(f"RFE sizes must lie in [1, {len(all_groups)}], got {sizes}")
    if sizes[-1] != len(all_groups):
        # the full set is always scored first so it can seed the ranking
        sizes.append(len(all_groups))

    partitions = cv_partitions(train.labels, cv)
    try:
        per_fold = Parallel(n_jobs=n_jobs)(
            delayed(_rfe_fold)(train, part, all_groups, sizes, n_trees, seed) for part in partitions
        )
    except ChurnError as e:
        logger.error(f"RFE failed: {e}")
        raise

    accuracy, kappa, fold_accuracy = {}, {}, {}
    for size in sizes:
        acc = np.array([fold[size][0] for fold in per_fold])
        kap = np.array([fold[size][1] for fold in per_fold])
        fold_accuracy[size] = tuple(float(a) for a in acc)
        accuracy[size] = float(np.sum(acc) / acc.size)
        kappa[size] = float(np.sum(kap) / kap.size)

    chosen = min(sizes, key=lambda s: (-round(accuracy[s], 12), s))
    _, kept = _eliminate(train, None, all_groups, sizes, n_trees, seed)
    logger.info(f"RFE chose {chosen} predictors (cv accuracy {accuracy[chosen]:.4f})")
    return RfeResult(
        sizes=tuple(sizes),
        accuracy=accuracy,
        kappa=kappa,
        fold_accuracy=fold_accuracy,
        chosen_size=chosen,
        chosen_variables=tuple(kept[chosen]),
    )
