"""
CART trees stored as node arrays, bagged into random forests or boosted on the logistic loss.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from phishscan.errors import DegenerateTrainingError, FeatureWidthError, ModelFormatError
from phishscan.schema import FeatureMatrix
from phishscan.utils import parallel_map

LEAF = -1
BAGGING = 'bagging'
BOOSTING = 'boosting'


@dataclass
class DecisionTree:
    """
    Binary tree as parallel node arrays; node 0 is the root.

    Samples with x[feature] <= threshold go left. `cover` is the weighted count
    of training samples reaching each node, `value` the node response:
    P(phishing) for classification trees, the Newton step for boosting trees.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return bool(self.feature[node] == LEAF)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """ Index of the leaf reached by each row """
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active[rows] = self.feature[node[rows]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> Dict[str, list]:
        return {
            'feature': self.feature.tolist(),
            'threshold': self.threshold.tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'cover': self.cover.tolist(),
            'value': self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, list]) -> 'DecisionTree':
        try:
            tree = cls(
                feature=np.array(d['feature'], dtype=np.int64),
                threshold=np.array(d['threshold'], dtype=np.float64),
                left=np.array(d['left'], dtype=np.int64),
                right=np.array(d['right'], dtype=np.int64),
                cover=np.array(d['cover'], dtype=np.float64),
                value=np.array(d['value'], dtype=np.float64),
            )
        except KeyError as e:
            raise ModelFormatError(f'Tree is missing the {e} array')
        arrays = (tree.feature, tree.threshold, tree.left, tree.right, tree.cover, tree.value)
        if len({len(arr) for arr in arrays}) != 1:
            raise ModelFormatError('Tree node arrays differ in length')
        return tree


class _TreeBuilder:
    def __init__(self, criterion: str, max_depth: Optional[int], min_samples_leaf: int, max_features: int):
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.cover: List[float] = []
        self.value: List[float] = []

    def _new_node(self, cover: float, value: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.cover.append(cover)
        self.value.append(value)
        return len(self.feature) - 1

    def _is_pure(self, target: np.ndarray, w: np.ndarray) -> bool:
        if self.criterion == 'gini':
            positives = float(np.dot(w, target))
            return positives == 0.0 or positives == float(w.sum())
        return bool(np.ptp(target) == 0)

    def _scores(self, wl, tl, w_total, t_total) -> np.ndarray:
        wr = w_total - wl
        tr = t_total - tl
        if self.criterion == 'gini':
            # weighted Gini impurity of the two children, lower is better
            return 2.0 * tl * (wl - tl) / wl + 2.0 * tr * (wr - tr) / wr
        # negated between-children sum of squares, lower is better
        return -(tl * tl / wl + tr * tr / wr)

    def _best_split(self, X: np.ndarray, idx: np.ndarray, target: np.ndarray, weight: np.ndarray,
                    order: np.ndarray) -> Optional[Tuple[int, float, np.ndarray]]:
        best_score = math.inf
        best: Optional[Tuple[int, float, np.ndarray]] = None
        visited = 0
        w_node = weight[idx]
        t_node = target[idx]
        for j in order:
            xs = X[idx, j]
            if xs.min() == xs.max():
                continue
            visited += 1
            perm = np.argsort(xs, kind='stable')
            xs = xs[perm]
            cw = np.cumsum(w_node[perm])
            ct = np.cumsum(w_node[perm] * t_node[perm])
            wl = cw[:-1]
            valid = (xs[:-1] < xs[1:]) & (wl >= self.min_samples_leaf) & (cw[-1] - wl >= self.min_samples_leaf)
            candidates = np.flatnonzero(valid)
            if len(candidates):
                scores = self._scores(wl[candidates], ct[:-1][candidates], cw[-1], ct[-1])
                k = int(np.argmin(scores))
                if scores[k] < best_score:
                    pos = candidates[k]
                    threshold = (xs[pos] + xs[pos + 1]) / 2.0
                    if threshold >= xs[pos + 1]:
                        threshold = xs[pos]
                    best_score = float(scores[k])
                    best = (int(j), float(threshold), X[idx, j] <= threshold)
            if visited >= self.max_features:
                break
        return best

    def build(self, X: np.ndarray, target: np.ndarray, weight: np.ndarray, denominator: np.ndarray,
              rng: np.random.Generator) -> DecisionTree:
        n_features = X.shape[1]
        root_idx = np.flatnonzero(weight > 0)

        def leaf_value(idx):
            den = float(np.dot(weight[idx], denominator[idx]))
            return float(np.dot(weight[idx], target[idx])) / den if den > 1e-12 else 0.0

        root = self._new_node(float(weight[root_idx].sum()), leaf_value(root_idx))
        stack = [(root, root_idx, 0)]
        while stack:
            node, idx, depth = stack.pop()
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            if self.cover[node] < 2 * self.min_samples_leaf or self._is_pure(target[idx], weight[idx]):
                continue
            split = self._best_split(X, idx, target, weight, rng.permutation(n_features))
            if split is None:
                continue
            j, threshold, go_left = split
            left_idx, right_idx = idx[go_left], idx[~go_left]
            left = self._new_node(float(weight[left_idx].sum()), leaf_value(left_idx))
            right = self._new_node(float(weight[right_idx].sum()), leaf_value(right_idx))
            self.feature[node] = j
            self.threshold[node] = threshold
            self.left[node] = left
            self.right[node] = right
            stack.append((right, right_idx, depth + 1))
            stack.append((left, left_idx, depth + 1))
        return DecisionTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            cover=np.array(self.cover, dtype=np.float64),
            value=np.array(self.value, dtype=np.float64),
        )


def grow_tree(X: np.ndarray, target: np.ndarray, *, weight: Optional[np.ndarray] = None,
              denominator: Optional[np.ndarray] = None, criterion: str = 'gini', max_depth: Optional[int] = None,
              min_samples_leaf: int = 1, max_features: Optional[int] = None,
              rng: Optional[np.random.Generator] = None) -> DecisionTree:
    n, n_features = X.shape
    weight = np.ones(n) if weight is None else np.asarray(weight, dtype=np.float64)
    denominator = np.ones(n) if denominator is None else np.asarray(denominator, dtype=np.float64)
    max_features = n_features if max_features is None else max(1, min(max_features, n_features))
    builder = _TreeBuilder(criterion, max_depth, min_samples_leaf, max_features)
    return builder.build(np.asarray(X, dtype=np.float64), np.asarray(target, dtype=np.float64), weight,
                         denominator, rng if rng is not None else np.random.default_rng(0))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass
class ForestModel:
    trees: List[DecisionTree]
    mode: str
    feature_count: int
    learning_rate: float = 1.0
    base_score: float = 0.0

    def check_width(self, X: np.ndarray):
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise FeatureWidthError(f'Model expects {self.feature_count} features, got {X.shape[-1]}')

    def tree_outputs(self, tree: DecisionTree) -> np.ndarray:
        """ Per-node contribution of one tree to the explained output """
        if self.mode == BAGGING:
            return (tree.value > 0.5).astype(np.float64) / len(self.trees)
        return self.learning_rate * tree.value

    def output(self, X: np.ndarray) -> np.ndarray:
        """ Vote share for bagging, log-odds margin for boosting """
        X = np.asarray(X, dtype=np.float64)
        self.check_width(X)
        total = np.zeros(X.shape[0]) if self.mode == BAGGING else np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            total += self.tree_outputs(tree)[tree.apply(X)]
        return total

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        out = self.output(X)
        return out if self.mode == BAGGING else sigmoid(out)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'feature_count': self.feature_count,
            'learning_rate': self.learning_rate,
            'base_score': self.base_score,
            'trees': [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'ForestModel':
        if d.get('mode') not in (BAGGING, BOOSTING):
            raise ModelFormatError(f'Unknown ensemble mode {d.get("mode")}')
        return cls(
            trees=[DecisionTree.from_dict(tree) for tree in d['trees']],
            mode=d['mode'],
            feature_count=int(d['feature_count']),
            learning_rate=float(d['learning_rate']),
            base_score=float(d['base_score']),
        )


def check_trainable(features: FeatureMatrix):
    if features.n_rows < 2:
        raise DegenerateTrainingError(f'Training needs at least 2 samples, got {features.n_rows}')
    classes = set(np.unique(features.y).tolist())
    if len(classes) < 2:
        raise DegenerateTrainingError(f'Training needs both classes, got only {sorted(classes)}')


def resolve_max_features(max_features: Union[int, str], n_features: int) -> int:
    if max_features == 'sqrt':
        return max(1, int(math.floor(math.sqrt(n_features))))
    if max_features == 'all':
        return n_features
    if isinstance(max_features, str):
        raise ValueError(f'Unknown max_features "{max_features}"')
    return max(1, min(int(max_features), n_features))


def train_random_forest(features: FeatureMatrix, n_trees: int = 100, max_depth: Optional[int] = None,
                        max_features: Union[int, str] = 'sqrt', min_samples_leaf: int = 1, bootstrap: bool = True,
                        seed: int = 0, workers: int = 1) -> ForestModel:
    check_trainable(features)
    X, y = features.X, features.y.astype(np.float64)
    n = features.n_rows
    per_split = resolve_max_features(max_features, features.width)

    def one_tree(i: int) -> DecisionTree:
        # per-tree stream, independent of the tree count and of scheduling
        rng = np.random.default_rng([seed, i])
        weight = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64) if bootstrap else np.ones(n)
        return grow_tree(X, y, weight=weight, criterion='gini', max_depth=max_depth,
                         min_samples_leaf=min_samples_leaf, max_features=per_split, rng=rng)

    trees = parallel_map(one_tree, range(n_trees), workers)
    return ForestModel(trees, BAGGING, features.width)


def train_gbdt(features: FeatureMatrix, n_trees: int = 100, max_depth: Optional[int] = 3,
               learning_rate: float = 0.1, min_samples_leaf: int = 1, seed: int = 0) -> ForestModel:
    """ Stagewise regression trees on logistic-loss gradients, with Newton leaf values """
    check_trainable(features)
    X, y = features.X, features.y.astype(np.float64)
    prior = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    base_score = math.log(prior / (1.0 - prior))
    margin = np.full(features.n_rows, base_score)
    trees = []
    for i in range(n_trees):
        p = sigmoid(margin)
        residual = y - p
        hessian = p * (1.0 - p)
        tree = grow_tree(X, residual, denominator=hessian, criterion='mse', max_depth=max_depth,
                         min_samples_leaf=min_samples_leaf, rng=np.random.default_rng([seed, i]))
        margin += learning_rate * tree.predict(X)
        trees.append(tree)
    return ForestModel(trees, BOOSTING, features.width, learning_rate=learning_rate, base_score=base_score)
