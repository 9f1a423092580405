"""Gini decision trees: CART with cost-complexity pruning and random forests."""

import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from errors import FitError, ModelError

logger = logging.getLogger("trees")

LEAF = -1


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Binary tree in flat arrays; node 0 is the root, leaves have feature -1.

    Rows with ``x[feature] <= threshold`` go left. ``n_pos`` counts Left rows
    reaching the node during training.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_samples: np.ndarray
    n_pos: np.ndarray
    n_features: int

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.is_leaf))

    @property
    def impurity(self) -> np.ndarray:
        p = self.n_pos / self.n_samples
        return 2.0 * p * (1.0 - p)

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for node in range(self.node_count):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            current = node[idx]
            go_left = X[idx, self.feature[current]] <= self.threshold[current]
            node[idx] = np.where(go_left, self.left[current], self.right[current])
            active[idx] = self.feature[node[idx]] != LEAF
        return node

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        """Left fraction of the leaf each row lands in."""
        leaves = self.apply(X)
        return self.n_pos[leaves] / self.n_samples[leaves]

    def impurity_importance(self) -> np.ndarray:
        """Weighted Gini decrease summed per feature over primary splits."""
        weighted = self.n_samples * self.impurity
        importance = np.zeros(self.n_features)
        for node in np.flatnonzero(~self.is_leaf):
            decrease = (
                weighted[node] - weighted[self.left[node]] - weighted[self.right[node]]
            )
            importance[self.feature[node]] += decrease
        return importance

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "n_samples": self.n_samples.tolist(),
            "n_pos": self.n_pos.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            n_samples=np.asarray(data["n_samples"], dtype=np.int64),
            n_pos=np.asarray(data["n_pos"], dtype=np.int64),
            n_features=int(data["n_features"]),
        )

    def describe(self, columns: list[str] | tuple[str, ...]) -> list[str]:
        """Indented split listing: node, condition, n, Left fraction, majority label."""
        lines = ["node) split, n, left_fraction, prediction"]

        def walk(node: int, number: int, condition: str, depth: int) -> None:
            frac = self.n_pos[node] / self.n_samples[node]
            label = "Left" if frac >= 0.5 else "Stayed"
            leaf = " *" if self.feature[node] == LEAF else ""
            lines.append(
                f"{'  ' * depth}{number}) {condition} {self.n_samples[node]} "
                f"{frac:.4f} {label}{leaf}"
            )
            if self.feature[node] != LEAF:
                name = columns[self.feature[node]]
                thr = self.threshold[node]
                walk(self.left[node], 2 * number, f"{name} <= {thr:.6g}", depth + 1)
                walk(self.right[node], 2 * number + 1, f"{name} > {thr:.6g}", depth + 1)

        walk(0, 1, "root", 0)
        return lines


def _best_split(
    Xn: np.ndarray, yn: np.ndarray, candidates: np.ndarray, min_leaf: int
) -> tuple[int, float] | None:
    """Lowest weighted-Gini split over candidate features, or None."""
    n = len(yn)
    total_pos = yn.sum()
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    size_ok = (n_left >= min_leaf) & (n_right >= min_leaf)
    if not size_ok.any():
        return None

    best_score = np.inf
    best: tuple[int, float] | None = None
    for f in candidates:
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        pos_left = np.cumsum(yn[order])[:-1]
        pos_right = total_pos - pos_left
        valid = size_ok & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        # n_t * gini_t == 2 * pos * neg / n_t
        score = 2.0 * pos_left * (n_left - pos_left) / n_left
        score += 2.0 * pos_right * (n_right - pos_right) / n_right
        score[~valid] = np.inf
        i = int(np.argmin(score))
        if score[i] < best_score - 1e-12:
            best_score = score[i]
            threshold = (xs[i] + xs[i + 1]) / 2.0
            if threshold >= xs[i + 1]:
                threshold = xs[i]
            best = (int(f), float(threshold))
    return best


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    min_split: int = 2,
    min_leaf: int = 1,
    max_depth: int | None = None,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Grow an unpruned Gini tree.

    With ``max_features`` below the feature count, each node draws that many
    candidate features without replacement from ``rng``; otherwise every
    feature is tried in column order.
    """
    n, d = X.shape
    y = np.asarray(y, dtype=np.int64)
    subsample = max_features is not None and max_features < d
    if subsample and rng is None:
        raise ModelError("feature subsampling needs a random generator")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    n_samples: list[int] = []
    n_pos: list[int] = []

    def new_node(rows: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        n_samples.append(len(rows))
        n_pos.append(int(y[rows].sum()))
        return len(feature) - 1

    all_features = np.arange(d)
    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        pos = n_pos[node]
        if (
            len(rows) < min_split
            or pos == 0
            or pos == len(rows)
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        candidates = rng.choice(d, size=max_features, replace=False) if subsample else all_features
        split = _best_split(X[rows], y[rows], candidates, min_leaf)
        if split is None:
            continue
        f, thr = split
        goes_left = X[rows, f] <= thr
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        n_pos=np.asarray(n_pos, dtype=np.int64),
        n_features=d,
    )


# --- Cost-complexity pruning ---


def _reachable(tree: DecisionTree, collapsed: np.ndarray) -> list[int]:
    """Preorder of the nodes still in the tree once ``collapsed`` nodes are leaves."""
    order: list[int] = []
    stack = [0]
    while stack:
        node = stack.pop()
        order.append(node)
        if tree.feature[node] != LEAF and not collapsed[node]:
            stack.append(tree.right[node])
            stack.append(tree.left[node])
    return order


def _compact(tree: DecisionTree, collapsed: np.ndarray) -> DecisionTree:
    """Rebuild the arrays keeping only nodes reachable after collapsing."""
    order = _reachable(tree, collapsed)
    new_index = {old: new for new, old in enumerate(order)}
    old = np.asarray(order)
    internal = (tree.feature[old] != LEAF) & ~collapsed[old]
    left = np.full(len(order), LEAF, dtype=np.int64)
    right = np.full(len(order), LEAF, dtype=np.int64)
    for new, node in enumerate(order):
        if internal[new]:
            left[new] = new_index[tree.left[node]]
            right[new] = new_index[tree.right[node]]
    return DecisionTree(
        feature=np.where(internal, tree.feature[old], LEAF),
        threshold=np.where(internal, tree.threshold[old], 0.0),
        left=left,
        right=right,
        n_samples=tree.n_samples[old],
        n_pos=tree.n_pos[old],
        n_features=tree.n_features,
    )


def prune_tree(tree: DecisionTree, cp: float) -> DecisionTree:
    """Weakest-link pruning on misclassification risk relative to the root.

    A split survives only while its subtree lowers the relative error by more
    than ``cp`` per extra leaf; subtrees whose complexity is <= cp collapse.
    """
    risk = np.minimum(tree.n_pos, tree.n_samples - tree.n_pos).astype(np.float64)
    root_risk = risk[0]
    collapsed = np.zeros(tree.node_count, dtype=bool)
    if root_risk == 0:
        collapsed[0] = True
        return _compact(tree, collapsed)

    while True:
        leaf_risk = risk.copy()
        leaves = np.ones(tree.node_count)
        best_node, best_g = -1, np.inf
        # reversed preorder visits children before their parent
        for node in reversed(_reachable(tree, collapsed)):
            if tree.feature[node] == LEAF or collapsed[node]:
                continue
            lo, hi = tree.left[node], tree.right[node]
            leaf_risk[node] = leaf_risk[lo] + leaf_risk[hi]
            leaves[node] = leaves[lo] + leaves[hi]
            g = (risk[node] - leaf_risk[node]) / (root_risk * (leaves[node] - 1.0))
            if g < best_g:
                best_node, best_g = node, g
        if best_node < 0 or best_g > cp:
            break
        collapsed[best_node] = True
    return _compact(tree, collapsed)


def fit_cart(
    X: np.ndarray,
    y: np.ndarray,
    *,
    cp: float = 0.01,
    min_split: int = 20,
    min_leaf: int = 7,
    max_depth: int = 30,
) -> DecisionTree:
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise FitError("CART needs both classes in the training data")
    full = grow_tree(X, y, min_split=min_split, min_leaf=min_leaf, max_depth=max_depth)
    pruned = prune_tree(full, cp)
    logger.debug(
        f"CART grew {full.n_leaves} leaves, {pruned.n_leaves} after pruning at cp={cp}"
    )
    return pruned


# --- Random forest ---


def _tree_generator(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, stream)))


def bootstrap_rows(seed: int, index: int, n: int) -> np.ndarray:
    """The in-bag rows of tree ``index``; the first draw of its generator."""
    return _tree_generator(seed, index).integers(0, n, size=n)


def _grow_forest_tree(
    X: np.ndarray,
    y: np.ndarray,
    index: int,
    seed: int,
    mtry: int,
    min_leaf: int,
    bootstrap: bool,
) -> DecisionTree:
    rng = _tree_generator(seed, index)
    n = len(y)
    rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    return grow_tree(X[rows], y[rows], min_leaf=min_leaf, max_features=mtry, rng=rng)


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple[DecisionTree, ...]
    n_features: int
    mtry: int
    bootstrap: bool
    seed: int
    n_train: int

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Per-tree Left votes, shape (n_trees, n_rows)."""
        return np.stack([t.predict_scores(X) >= 0.5 for t in self.trees])

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        return self.votes(X).mean(axis=0)

    def oob_rows(self, index: int) -> np.ndarray:
        if not self.bootstrap:
            raise ModelError("forest was trained without bootstrap; no out-of-bag rows")
        in_bag = bootstrap_rows(self.seed, index, self.n_train)
        mask = np.ones(self.n_train, dtype=bool)
        mask[in_bag] = False
        return np.flatnonzero(mask)

    def oob_accuracy(self, X: np.ndarray, y: np.ndarray) -> float | None:
        """Majority-vote accuracy over rows that are out-of-bag for some tree."""
        left_votes = np.zeros(self.n_train)
        counts = np.zeros(self.n_train)
        for i, tree in enumerate(self.trees):
            rows = self.oob_rows(i)
            left_votes[rows] += tree.predict_scores(X[rows]) >= 0.5
            counts[rows] += 1
        seen = counts > 0
        if not seen.any():
            return None
        predicted = (left_votes[seen] / counts[seen]) >= 0.5
        return float(np.mean(predicted == (np.asarray(y)[seen] == 1)))

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "mtry": self.mtry,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "n_train": self.n_train,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RandomForest":
        return cls(
            trees=tuple(DecisionTree.from_dict(t) for t in data["trees"]),
            n_features=int(data["n_features"]),
            mtry=int(data["mtry"]),
            bootstrap=bool(data["bootstrap"]),
            seed=int(data["seed"]),
            n_train=int(data["n_train"]),
        )


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    *,
    n_trees: int = 500,
    mtry: int = 4,
    min_leaf: int = 1,
    bootstrap: bool = True,
    seed: int = 0,
    n_jobs: int = 1,
) -> RandomForest:
    """Fully grown trees on bootstrap samples, ``mtry`` candidates per split.

    Tree ``i`` draws everything from a generator seeded by (seed, i), so the
    forest does not depend on ``n_jobs``.
    """
    n, d = X.shape
    y = np.asarray(y, dtype=np.int64)
    if not 1 <= mtry <= d:
        raise ModelError(f"mtry must lie in [1, {d}], got {mtry}")
    if n_trees < 1:
        raise ModelError(f"n_trees must be positive, got {n_trees}")
    if len(np.unique(y)) < 2:
        raise FitError("random forest needs both classes in the training data")

    trees = Parallel(n_jobs=n_jobs)(
        delayed(_grow_forest_tree)(X, y, i, seed, mtry, min_leaf, bootstrap)
        for i in range(n_trees)
    )
    logger.debug(f"Grew {n_trees} trees (mtry={mtry}, bootstrap={bootstrap})")
    return RandomForest(tuple(trees), d, mtry, bootstrap, seed, n)


def forest_importances(
    forest: RandomForest, X: np.ndarray, y: np.ndarray, oob: bool = True
) -> tuple[np.ndarray | None, np.ndarray]:
    """Raw (mean decrease accuracy, mean decrease Gini) per feature.

    Mean decrease accuracy permutes one feature at a time among each tree's
    out-of-bag rows; permutations come from a per-tree generator stream
    separate from the one that grew the tree.
    """
    mdg = np.mean([t.impurity_importance() for t in forest.trees], axis=0)
    if not oob:
        return None, mdg
    if not forest.bootstrap:
        raise ModelError("out-of-bag importance requested but bootstrap was disabled")

    y = np.asarray(y, dtype=np.int64)
    drops = np.zeros(forest.n_features)
    used = 0
    for i, tree in enumerate(forest.trees):
        rows = forest.oob_rows(i)
        if rows.size == 0:
            continue
        Xo, yo = X[rows], y[rows]
        base = np.mean((tree.predict_scores(Xo) >= 0.5) == yo)
        rng = _tree_generator(forest.seed, i, stream=1)
        for j in range(forest.n_features):
            Xp = Xo.copy()
            Xp[:, j] = rng.permutation(Xp[:, j])
            drops[j] += base - np.mean((tree.predict_scores(Xp) >= 0.5) == yo)
        used += 1
    mda = drops / used if used else drops
    return mda, mdg
