"""Class balancing of training tables: majority under-sampling and SMOTE."""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from data_model import LABELS
from errors import ResampleError
from preprocess import SYNTHETIC_ROW, FeatureTable, binary_columns

logger = logging.getLogger("resampling")

RESAMPLE_KINDS = ("under", "smote")


@dataclass(frozen=True)
class ResamplePlan:
    """How to balance a training table to equal class counts.

    With ``normalize`` the SMOTE neighbour search runs on coordinates scaled
    by the minority rows' ranges; interpolation always uses original units.
    """

    kind: str
    k_neighbors: int = 5
    seed: int = 0
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in RESAMPLE_KINDS:
            raise ResampleError(f"unknown resample kind {self.kind!r}")
        if self.k_neighbors < 1:
            raise ResampleError(f"k_neighbors must be >= 1, got {self.k_neighbors}")

    def for_fold(self, repeat: int, fold: int) -> "ResamplePlan":
        """Same plan with a seed of its own for one CV training fold."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(repeat, fold))
        return replace(self, seed=int(seq.generate_state(1, dtype=np.uint64)[0]))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k_neighbors": self.k_neighbors,
            "seed": self.seed,
            "normalize": self.normalize,
        }


def _class_positions(train: FeatureTable) -> tuple[np.ndarray, np.ndarray, str]:
    """(minority positions, majority positions, minority label)."""
    groups = {label: np.flatnonzero(train.labels == label) for label in LABELS}
    minority = min(LABELS, key=lambda label: (len(groups[label]), label != LABELS[1]))
    majority = next(label for label in LABELS if label != minority)
    return groups[minority], groups[majority], minority


def undersample(train: FeatureTable, plan: ResamplePlan) -> FeatureTable:
    """Keep every minority row plus an equal-sized random subset of the majority."""
    minority, majority, label = _class_positions(train)
    if minority.size == 0:
        raise ResampleError("under-sampling needs at least one minority row")
    if minority.size == majority.size:
        return train
    rng = np.random.default_rng(plan.seed)
    kept = rng.choice(majority, size=minority.size, replace=False)
    positions = np.sort(np.concatenate([minority, kept]))
    logger.debug(f"Under-sampled {majority.size} majority rows to {kept.size} ({label} minority)")
    return train.take(positions)


def smote(train: FeatureTable, plan: ResamplePlan) -> FeatureTable:
    """Synthesize minority rows on segments to nearest minority neighbours.

    Each minority row seeds the same number of synthetics, with the remainder
    drawn without replacement. A 0/1 column takes the value of the nearer
    endpoint, so dummy groups stay valid.
    """
    minority, majority, label = _class_positions(train)
    k = plan.k_neighbors
    if minority.size <= k:
        raise ResampleError(
            f"SMOTE with k={k} needs more than {k} minority rows, got {minority.size}"
        )
    need = majority.size - minority.size
    if need <= 0:
        return train

    rng = np.random.default_rng(plan.seed)
    Xm = train.values[minority]
    space = Xm
    if plan.normalize:
        lo = Xm.min(axis=0)
        span = Xm.max(axis=0) - lo
        space = (Xm - lo) / np.where(span > 0, span, 1.0)
    dist = cdist(space, space)
    np.fill_diagonal(dist, np.inf)
    neighbours = np.argsort(dist, axis=1, kind="stable")[:, :k]

    m = minority.size
    seeds = np.concatenate(
        [np.repeat(np.arange(m), need // m), np.sort(rng.choice(m, size=need % m, replace=False))]
    )
    partners = neighbours[seeds, rng.integers(0, k, size=need)]
    u = rng.random(need)[:, None]
    synthetic = Xm[seeds] + u * (Xm[partners] - Xm[seeds])

    binary = binary_columns(train)
    if binary:
        nearer = np.where(u < 0.5, Xm[seeds][:, binary], Xm[partners][:, binary])
        synthetic[:, binary] = nearer

    logger.debug(f"SMOTE added {need} synthetic {label} rows to {train.n}")
    return FeatureTable(
        train.columns,
        np.vstack([train.values, synthetic]),
        np.concatenate([train.labels, np.full(need, label, dtype=object)]),
        np.concatenate([train.row_ids, np.full(need, SYNTHETIC_ROW, dtype=np.int64)]),
        train.transforms,
    )


def resample(train: FeatureTable, plan: ResamplePlan | None) -> FeatureTable:
    if plan is None:
        return train
    if train.labels is None:
        raise ResampleError("resampling needs a labelled table")
    if plan.kind == "under":
        return undersample(train, plan)
    return smote(train, plan)
