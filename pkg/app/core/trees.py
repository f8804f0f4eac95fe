# FILE 4: trees.py
# Purpose: CART regression trees, random forests and squared-loss gradient boosting.
# Dependencies: numpy, joblib

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from app.core.errors import ConfigError, DataError, DimensionMismatchError
from app.core.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

FOREST_TREES = 100
FOREST_DEPTH = 8
BOOST_TREES = 100
BOOST_DEPTH = 3
BOOST_LR = 0.3


def _check_X(X, n_features: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatchError(f"model was fit on {n_features} features, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise DataError("tree inputs must be complete and finite")
    return X


def _check_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = _check_X(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise DataError("cannot fit a tree on empty input")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatchError(f"{X.shape[0]} rows of X but {y.shape[0]} targets")
    return X, y


def _n_split_features(p: int, feature_subsample: Optional[float]) -> int:
    if feature_subsample is None:
        return (p + 2) // 3
    if not 0.0 < feature_subsample <= 1.0:
        raise ConfigError(f"feature_subsample must be in (0, 1], got {feature_subsample}")
    return max(1, min(p, int(np.ceil(feature_subsample * p - 1e-9))))


@dataclass(frozen=True)
class RegressionTree:
    """Flat node arrays; feature == -1 marks a leaf. Rows with x <= threshold go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int
    min_samples_leaf: int
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(node: int) -> int:
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            at = node[active]
            go_left = X[active, self.feature[at]] <= self.threshold[at]
            node[active] = np.where(go_left, self.left[at], self.right[at])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]


class _TreeBuilder:
    def __init__(self, X, y, max_depth, min_samples_leaf, n_split_features, rng):
        self.X = X
        self.y = y
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.n_split_features = n_split_features
        self.rng = rng
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def _new_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def _candidate_features(self) -> np.ndarray:
        p = self.X.shape[1]
        if self.n_split_features >= p:
            return np.arange(p)
        return np.sort(self.rng.choice(p, size=self.n_split_features, replace=False))

    def best_split(self, idx: np.ndarray) -> Optional[Tuple[int, float]]:
        """
        Maximizes parent SSE - left SSE - right SSE over midpoints of consecutive
        distinct values. Ties go to the lower feature index, then the lower threshold.
        """
        ys_all = self.y[idx]
        n = len(idx)
        total = ys_all.sum()
        left_n = np.arange(1, n)
        right_n = n - left_n
        size_ok = (left_n >= self.min_samples_leaf) & (right_n >= self.min_samples_leaf)

        best_gain, best = 0.0, None
        for f in self._candidate_features():
            xs = self.X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs, ys = xs[order], ys_all[order]
            left_sum = np.cumsum(ys)[:-1]
            right_sum = total - left_sum
            gain = left_sum ** 2 / left_n + right_sum ** 2 / right_n - total ** 2 / n
            valid = size_ok & (xs[1:] > xs[:-1])
            if not valid.any():
                continue
            gain = np.where(valid, gain, -np.inf)
            pos = int(np.argmax(gain))
            if gain[pos] > best_gain:
                best_gain = gain[pos]
                best = (int(f), float((xs[pos] + xs[pos + 1]) / 2.0))
        return best

    def build(self, idx: np.ndarray, depth: int) -> int:
        ys = self.y[idx]
        node = self._new_node(float(ys.mean()))
        if depth >= self.max_depth or len(idx) < 2 * self.min_samples_leaf or np.ptp(ys) == 0.0:
            return node
        split = self.best_split(idx)
        if split is None:
            return node
        f, thr = split
        goes_left = self.X[idx, f] <= thr
        left = self.build(idx[goes_left], depth + 1)
        right = self.build(idx[~goes_left], depth + 1)
        self.feature[node], self.threshold[node] = f, thr
        self.left[node], self.right[node] = left, right
        return node


def tree_fit(
    X,
    y,
    max_depth: int = BOOST_DEPTH,
    min_samples_leaf: int = 1,
    feature_subsample: Optional[float] = 1.0,
    seed: int = 0,
) -> RegressionTree:
    X, y = _check_xy(X, y)
    if max_depth < 0 or min_samples_leaf < 1:
        raise ConfigError(f"invalid tree settings max_depth={max_depth} min_samples_leaf={min_samples_leaf}")
    builder = _TreeBuilder(
        X, y, max_depth, min_samples_leaf, _n_split_features(X.shape[1], feature_subsample), make_rng(seed)
    )
    builder.build(np.arange(X.shape[0]), 0)
    return RegressionTree(
        feature=np.array(builder.feature, dtype=np.int64),
        threshold=np.array(builder.threshold, dtype=np.float64),
        left=np.array(builder.left, dtype=np.int64),
        right=np.array(builder.right, dtype=np.int64),
        value=np.array(builder.value, dtype=np.float64),
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        n_features=X.shape[1],
    )


@dataclass(frozen=True)
class ForestModel:
    trees: Tuple[RegressionTree, ...]
    seeds: Tuple[int, ...]
    feature_subsample: Optional[float]
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def _bootstrap_tree(X, y, max_depth, min_samples_leaf, feature_subsample, tree_seed):
    rng = make_rng(tree_seed)
    rows = rng.integers(0, X.shape[0], size=X.shape[0])
    return tree_fit(
        X[rows], y[rows],
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        feature_subsample=feature_subsample,
        seed=derive_seed(tree_seed, "split"),
    )


def forest_fit(
    X,
    y,
    n_trees: int = FOREST_TREES,
    max_depth: int = FOREST_DEPTH,
    feature_subsample: Optional[float] = None,
    seed: int = 0,
    min_samples_leaf: int = 1,
    n_jobs: int = 1,
) -> ForestModel:
    """
    Bagged CART trees. feature_subsample=None draws ceil(p/3) candidate features
    per split. Tree t is seeded from (seed, t), so results do not depend on n_jobs.
    """
    X, y = _check_xy(X, y)
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    _n_split_features(X.shape[1], feature_subsample)
    seeds = tuple(derive_seed(seed, "forest", t) for t in range(n_trees))
    if n_jobs == 1:
        trees = [_bootstrap_tree(X, y, max_depth, min_samples_leaf, feature_subsample, s) for s in seeds]
    else:
        trees = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_bootstrap_tree)(X, y, max_depth, min_samples_leaf, feature_subsample, s) for s in seeds
        )
    return ForestModel(trees=tuple(trees), seeds=seeds, feature_subsample=feature_subsample, n_features=X.shape[1])


@dataclass(frozen=True)
class BoostedModel:
    trees: Tuple[RegressionTree, ...]
    learning_rate: float
    base_score: float
    n_features: int
    train_sse: Tuple[float, ...] = ()

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def boost_fit(
    X,
    y,
    n_trees: int = BOOST_TREES,
    max_depth: int = BOOST_DEPTH,
    lr: float = BOOST_LR,
    seed: int = 0,
    min_samples_leaf: int = 1,
) -> BoostedModel:
    """Stagewise squared-loss boosting: F_t = F_{t-1} + lr * tree(y - F_{t-1})."""
    X, y = _check_xy(X, y)
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")

    base = float(y.mean())
    current = np.full(y.shape[0], base)
    sse = [float(np.sum((y - current) ** 2))]
    trees = []
    for t in range(n_trees):
        tree = tree_fit(X, y - current, max_depth=max_depth, min_samples_leaf=min_samples_leaf,
                        feature_subsample=1.0, seed=derive_seed(seed, "boost", t))
        current = current + lr * tree.predict(X)
        trees.append(tree)
        sse.append(float(np.sum((y - current) ** 2)))
    logger.debug(f"Boosting: SSE {sse[0]:.4g} -> {sse[-1]:.4g} over {n_trees} rounds")
    return BoostedModel(trees=tuple(trees), learning_rate=lr, base_score=base,
                        n_features=X.shape[1], train_sse=tuple(sse))


Model = Union[RegressionTree, ForestModel, BoostedModel]


def predict(model: Model, X) -> np.ndarray:
    out = model.predict(X)
    if not np.isfinite(out).all():
        raise DataError("tree model produced non-finite predictions")
    return out
