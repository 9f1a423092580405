"""Uniform fit/predict contract over the six classifier families.

Gaussian naive Bayes and k-nearest neighbours live here; CART and random
forests in ``trees``, the SMO support vector machine in ``svm`` and the
single-hidden-layer network in ``network``.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit
from scipy.stats import norm

from config import FAMILIES
from errors import FitError, ModelError
from metrics import labels_from_scores
from network import NeuralNetwork, fit_network, loss_gradient
from preprocess import FamilyPreprocessor, FeatureTable, fit_family_preprocessor
from svm import SupportVectorMachine
from svm import fit_svm as solve_svm
from trees import DecisionTree, RandomForest, fit_forest, forest_importances
from trees import fit_cart as grow_cart

logger = logging.getLogger("classifiers")

MODEL_FORMAT = "churnlab-model"
MODEL_VERSION = 1

HYPERPARAMETER_DEFAULTS: dict[str, dict[str, Any]] = {
    "gnb": {"sd_floor": 1e-3},
    "knn": {"k": 9},
    "svm": {"C": 1.0, "gamma": None, "tol": 1e-3, "max_iter": None, "cache_mb": 256},
    "cart": {"cp": 0.01, "min_split": 20, "min_leaf": 7, "max_depth": 30},
    "rf": {"n_trees": 500, "mtry": 4, "min_leaf": 1, "bootstrap": True},
    "ann": {"size": 5, "decay": 0.1, "max_iter": 500, "gtol": 1e-5},
}


class Estimator(Protocol):
    def predict_scores(self, X: np.ndarray) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def resolved(self) -> dict[str, Any]:
        """Family defaults overlaid with the given hyperparameters, validated."""
        if self.family not in FAMILIES:
            raise ModelError(f"unknown model family {self.family!r}")
        defaults = HYPERPARAMETER_DEFAULTS[self.family]
        unknown = set(self.hyperparameters) - set(defaults)
        if unknown:
            raise ModelError(f"unknown {self.family} hyperparameter(s): {sorted(unknown)}")
        params = {**defaults, **self.hyperparameters}
        _validate(self.family, params)
        return params

    def with_params(self, **params: Any) -> "ModelSpec":
        return ModelSpec(self.family, {**self.hyperparameters, **params}, self.seed)

    def to_dict(self) -> dict:
        return {"family": self.family, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(data["family"], dict(data.get("hyperparameters", {})), int(data.get("seed", 0)))


def _validate(family: str, p: dict[str, Any]) -> None:
    def positive(name: str, strict: bool = True) -> None:
        value = p[name]
        if value is None:
            return
        if (strict and value <= 0) or (not strict and value < 0):
            raise ModelError(f"{family} {name} must be {'>' if strict else '>='} 0, got {value}")

    if family == "gnb":
        positive("sd_floor")
    elif family == "knn":
        positive("k")
    elif family == "svm":
        for name in ("C", "gamma", "tol", "max_iter", "cache_mb"):
            positive(name)
    elif family == "cart":
        positive("cp", strict=False)
        for name in ("min_split", "min_leaf", "max_depth"):
            positive(name)
    elif family == "rf":
        for name in ("n_trees", "mtry", "min_leaf"):
            positive(name)
    elif family == "ann":
        positive("decay", strict=False)
        for name in ("size", "max_iter", "gtol"):
            positive(name)


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A trained estimator plus the feature layout it was trained on.

    ``preprocessor`` is set when the model was trained through
    ``fit_pipeline`` and then accepts tables in the pre-transform layout.
    ``partition`` records the split settings of the rows it was trained on.
    """

    family: str
    spec: ModelSpec
    columns: tuple[str, ...]
    fingerprint: str
    estimator: Estimator
    preprocessor: FamilyPreprocessor | None = None
    input_fingerprint: str | None = None
    partition: dict[str, Any] | None = None


# --- Gaussian naive Bayes ---


@dataclass(frozen=True, eq=False)
class GaussianNaiveBayes:
    """Per-class priors with independent per-feature normal likelihoods."""

    log_priors: np.ndarray  # (2,) for Stayed, Left
    means: np.ndarray  # (2, d)
    sds: np.ndarray  # (2, d)

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, sd_floor: float = 1e-3) -> "GaussianNaiveBayes":
        counts = np.array([np.sum(y == 0), np.sum(y == 1)])
        if (counts < 2).any():
            raise FitError("naive Bayes needs at least two rows of each class")
        means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
        sds = np.stack([X[y == c].std(axis=0, ddof=1) for c in (0, 1)])
        sds = np.maximum(sds, sd_floor)
        return cls(np.log(counts / counts.sum()), means, sds)

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        return np.stack(
            [
                self.log_priors[c] + norm.logpdf(X, self.means[c], self.sds[c]).sum(axis=1)
                for c in (0, 1)
            ],
            axis=1,
        )

    def posterior(self, X: np.ndarray) -> np.ndarray:
        """(n, 2) class posteriors; rows sum to 1."""
        left = expit(np.diff(self.joint_log_likelihood(X), axis=1)[:, 0])
        return np.column_stack([1.0 - left, left])

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        return self.posterior(X)[:, 1]

    def to_dict(self) -> dict:
        return {
            "log_priors": self.log_priors.tolist(),
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianNaiveBayes":
        return cls(
            np.asarray(data["log_priors"]), np.asarray(data["means"]), np.asarray(data["sds"])
        )


# --- k-nearest neighbours ---


@dataclass(frozen=True, eq=False)
class KNearestNeighbors:
    X: np.ndarray
    y: np.ndarray
    k: int

    def neighbors(self, Q: np.ndarray) -> np.ndarray:
        """Indices of the k nearest training rows; equal distances keep row order."""
        if self.k > len(self.X):
            raise ModelError(f"k={self.k} exceeds the {len(self.X)} training rows")
        out = np.empty((len(Q), self.k), dtype=np.int64)
        for start in range(0, len(Q), 1024):
            dist = cdist(Q[start : start + 1024], self.X)
            out[start : start + 1024] = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        return out

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        """Fraction of Left among the k nearest neighbours."""
        return self.y[self.neighbors(X)].mean(axis=1)

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "k": self.k}

    @classmethod
    def from_dict(cls, data: dict) -> "KNearestNeighbors":
        return cls(np.asarray(data["X"], dtype=np.float64), np.asarray(data["y"], dtype=np.int64), int(data["k"]))


def knn_predict(
    train: FeatureTable, query: FeatureTable, k: int = 9
) -> tuple[np.ndarray, np.ndarray]:
    """(labels, scores) for the query rows by majority of the k nearest."""
    if k <= 0:
        raise ModelError(f"k must be positive, got {k}")
    if train.columns != query.columns:
        raise ModelError("query columns differ from training columns")
    scores = KNearestNeighbors(train.values, train.y, k).predict_scores(query.values)
    return labels_from_scores(scores), scores


# --- Fitting ---


def _require_both_classes(train: FeatureTable, family: str) -> np.ndarray:
    y = train.y
    if y.size == 0 or y.min() == y.max():
        logger.error(f"{family}: training data holds a single class")
        raise FitError(f"{family} needs both classes in the training data")
    return y


def _wrap(spec: ModelSpec, train: FeatureTable, estimator: Estimator) -> FittedModel:
    return FittedModel(spec.family, spec, train.columns, train.fingerprint, estimator)


def fit_gnb(train: FeatureTable, spec: ModelSpec) -> FittedModel:
    p = spec.resolved()
    y = _require_both_classes(train, "gnb")
    return _wrap(spec, train, GaussianNaiveBayes.fit(train.values, y, p["sd_floor"]))


def fit_knn(train: FeatureTable, spec: ModelSpec) -> FittedModel:
    p = spec.resolved()
    y = _require_both_classes(train, "knn")
    if p["k"] > train.n:
        raise ModelError(f"k={p['k']} exceeds the {train.n} training rows")
    return _wrap(spec, train, KNearestNeighbors(train.values.copy(), y, int(p["k"])))


def fit_svm(train: FeatureTable, spec: ModelSpec) -> FittedModel:
    p = spec.resolved()
    y = _require_both_classes(train, "svm")
    machine = solve_svm(
        train.values,
        y,
        C=p["C"],
        gamma=p["gamma"],
        tol=p["tol"],
        max_iter=p["max_iter"],
        cache_mb=p["cache_mb"],
    )
    return _wrap(spec, train, machine)


def fit_cart(train: FeatureTable, spec: ModelSpec) -> FittedModel:
    p = spec.resolved()
    y = _require_both_classes(train, "cart")
    tree = grow_cart(
        train.values,
        y,
        cp=p["cp"],
        min_split=int(p["min_split"]),
        min_leaf=int(p["min_leaf"]),
        max_depth=int(p["max_depth"]),
    )
    return _wrap(spec, train, tree)


def fit_rf(train: FeatureTable, spec: ModelSpec, n_jobs: int = 1) -> FittedModel:
    p = spec.resolved()
    y = _require_both_classes(train, "rf")
    if p["mtry"] > train.d:
        raise ModelError(f"mtry={p['mtry']} exceeds the {train.d} feature columns")
    forest = fit_forest(
        train.values,
        y,
        n_trees=int(p["n_trees"]),
        mtry=int(p["mtry"]),
        min_leaf=int(p["min_leaf"]),
        bootstrap=bool(p["bootstrap"]),
        seed=spec.seed,
        n_jobs=n_jobs,
    )
    return _wrap(spec, train, forest)


def fit_ann(train: FeatureTable, spec: ModelSpec) -> FittedModel:
    p = spec.resolved()
    y = _require_both_classes(train, "ann")
    net = fit_network(
        train.values,
        y,
        size=int(p["size"]),
        decay=float(p["decay"]),
        max_iter=int(p["max_iter"]),
        gtol=float(p["gtol"]),
        seed=spec.seed,
    )
    return _wrap(spec, train, net)


_FITTERS = {
    "gnb": fit_gnb,
    "knn": fit_knn,
    "svm": fit_svm,
    "cart": fit_cart,
    "ann": fit_ann,
}


def fit_model(spec: ModelSpec, train: FeatureTable, n_jobs: int = 1) -> FittedModel:
    """Train ``spec`` on an already-prepared table."""
    spec.resolved()
    if spec.family == "rf":
        return fit_rf(train, spec, n_jobs=n_jobs)
    return _FITTERS[spec.family](train, spec)


def fit_pipeline(
    spec: ModelSpec, train: FeatureTable, n_jobs: int = 1
) -> tuple[FittedModel, FeatureTable]:
    """Fit the family preprocessor on ``train``, then the model on the result.

    Returns the model (which then accepts raw-layout tables) and the
    transformed training table.
    """
    preprocessor = fit_family_preprocessor(spec.family, train)
    prepared = preprocessor.apply(train)
    model = fit_model(spec, prepared, n_jobs=n_jobs)
    return (
        FittedModel(
            model.family,
            model.spec,
            model.columns,
            model.fingerprint,
            model.estimator,
            preprocessor,
            train.fingerprint,
        ),
        prepared,
    )


# --- Prediction ---


def prepare(m: FittedModel, t: FeatureTable) -> FeatureTable:
    """The table the estimator sees; rejects any other feature layout."""
    if t.fingerprint == m.fingerprint:
        return t
    if m.preprocessor is not None and t.fingerprint == m.input_fingerprint:
        return m.preprocessor.apply(t)
    logger.error(f"{m.family}: table fingerprint {t.fingerprint} != model {m.fingerprint}")
    raise ModelError(
        f"feature layout mismatch: model expects {list(m.columns)} "
        f"with fingerprint {m.fingerprint}, got {t.fingerprint}"
    )


def predict_scores(m: FittedModel, t: FeatureTable) -> np.ndarray:
    """Left scores in [0, 1], one per row."""
    return np.clip(m.estimator.predict_scores(prepare(m, t).values), 0.0, 1.0)


def predict_labels(m: FittedModel, t: FeatureTable) -> np.ndarray:
    return labels_from_scores(predict_scores(m, t))


# --- Importances ---


@dataclass(frozen=True)
class ImportanceRanking:
    """(variable, score) pairs in descending order, scores on a 0-100 scale."""

    entries: tuple[tuple[str, float], ...]

    @classmethod
    def from_raw(cls, columns: tuple[str, ...] | list[str], raw: np.ndarray) -> "ImportanceRanking":
        """Min-max scale to 0..100, so the weakest column always scores 0."""
        raw = np.asarray(raw, dtype=np.float64)
        lo, hi = raw.min(), raw.max()
        if hi > lo:
            scaled = 100.0 * (raw - lo) / (hi - lo)
        else:
            scaled = np.full(len(raw), 0.0 if hi == 0 else 100.0)
        # stable sort keeps column order among equal scores
        order = np.argsort(-scaled, kind="stable")
        return cls(tuple((columns[i], float(scaled[i])) for i in order))

    @property
    def variables(self) -> list[str]:
        return [name for name, _ in self.entries]

    def score(self, variable: str) -> float:
        for name, value in self.entries:
            if name == variable:
                return value
        raise ModelError(f"variable {variable!r} not in ranking")

    def rank(self, variable: str) -> int:
        """1-based position."""
        return self.variables.index(variable) + 1

    def top(self, k: int) -> list[str]:
        return self.variables[:k]

    def to_dict(self) -> dict:
        return {name: value for name, value in self.entries}


def tree_importance(m: FittedModel) -> ImportanceRanking:
    if not isinstance(m.estimator, DecisionTree):
        raise ModelError(f"tree importance needs a CART model, got {m.family}")
    return ImportanceRanking.from_raw(m.columns, m.estimator.impurity_importance())


def rf_importance(
    m: FittedModel, train: FeatureTable, oob: bool = True
) -> tuple[ImportanceRanking | None, ImportanceRanking]:
    """(mean decrease accuracy, mean decrease Gini); the first is None without ``oob``."""
    if not isinstance(m.estimator, RandomForest):
        raise ModelError(f"forest importance needs an RF model, got {m.family}")
    prepared = prepare(m, train)
    mda, mdg = forest_importances(m.estimator, prepared.values, prepared.y, oob=oob)
    mda_ranking = None if mda is None else ImportanceRanking.from_raw(m.columns, mda)
    return mda_ranking, ImportanceRanking.from_raw(m.columns, mdg)


def oob_accuracy(m: FittedModel, train: FeatureTable) -> float | None:
    if not isinstance(m.estimator, RandomForest):
        raise ModelError(f"out-of-bag accuracy needs an RF model, got {m.family}")
    prepared = prepare(m, train)
    return m.estimator.oob_accuracy(prepared.values, prepared.y)


# --- Diagnostics ---


def ann_loss_gradient(
    m: FittedModel, batch: FeatureTable
) -> tuple[float, np.ndarray]:
    """Regularised loss and exact gradient of a fitted network on ``batch``."""
    net = m.estimator
    if not isinstance(net, NeuralNetwork):
        raise ModelError(f"loss gradient needs an ANN model, got {m.family}")
    prepared = prepare(m, batch)
    return loss_gradient(net.weights, prepared.values, prepared.y, net.size, net.decay)


def svm_objectives(m: FittedModel, train: FeatureTable) -> tuple[float, float]:
    """(primal, dual) objective values of a fitted SVM on its training table."""
    if not isinstance(m.estimator, SupportVectorMachine):
        raise ModelError(f"objectives need an SVM model, got {m.family}")
    prepared = prepare(m, train)
    return m.estimator.objectives(prepared.values, prepared.y)


def primal_objective(m: FittedModel, train: FeatureTable) -> float:
    return svm_objectives(m, train)[0]


def dual_objective(m: FittedModel, train: FeatureTable) -> float:
    return svm_objectives(m, train)[1]


def describe_tree(m: FittedModel) -> str:
    if not isinstance(m.estimator, DecisionTree):
        raise ModelError(f"tree listing needs a CART model, got {m.family}")
    return "\n".join(m.estimator.describe(m.columns))


def describe_network(m: FittedModel) -> str:
    if not isinstance(m.estimator, NeuralNetwork):
        raise ModelError(f"network listing needs an ANN model, got {m.family}")
    return "\n".join(m.estimator.describe(m.columns))


# --- Serialization ---

_ESTIMATORS = {
    "gnb": GaussianNaiveBayes,
    "knn": KNearestNeighbors,
    "svm": SupportVectorMachine,
    "cart": DecisionTree,
    "rf": RandomForest,
    "ann": NeuralNetwork,
}


def model_to_dict(m: FittedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": m.family,
        "spec": m.spec.to_dict(),
        "columns": list(m.columns),
        "fingerprint": m.fingerprint,
        "input_fingerprint": m.input_fingerprint,
        "preprocessor": None if m.preprocessor is None else m.preprocessor.to_dict(),
        "parameters": m.estimator.to_dict(),
        "partition": m.partition,
    }


def model_from_dict(data: dict) -> FittedModel:
    if data.get("format") != MODEL_FORMAT:
        raise ModelError(f"not a {MODEL_FORMAT} document")
    if data.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {data.get('version')!r}")
    family = data["family"]
    if family not in _ESTIMATORS:
        raise ModelError(f"unknown model family {family!r}")
    preprocessor = data.get("preprocessor")
    return FittedModel(
        family=family,
        spec=ModelSpec.from_dict(data["spec"]),
        columns=tuple(data["columns"]),
        fingerprint=data["fingerprint"],
        estimator=_ESTIMATORS[family].from_dict(data["parameters"]),
        preprocessor=None if preprocessor is None else FamilyPreprocessor.from_dict(preprocessor),
        input_fingerprint=data.get("input_fingerprint"),
        partition=data.get("partition"),
    )
