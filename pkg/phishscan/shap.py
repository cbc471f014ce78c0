"""
Path-dependent TreeSHAP for the tree ensembles, with an exhaustive subset oracle.

Bagged forests are explained on the vote share (the phishing probability),
boosted ensembles on the log-odds margin. Expectations are taken with the
training cover of each node.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from phishscan.errors import EmptyInputError, FeatureWidthError
from phishscan.schema import AttributionReport, FeatureMatrix
from phishscan.trees import BOOSTING, LEAF, DecisionTree, ForestModel


class _Path:
    """ The unique path of features on the way to a node, with zero/one fractions and subset weights """
    __slots__ = ('d', 'z', 'o', 'w')

    def __init__(self, d=None, z=None, o=None, w=None):
        self.d: List[int] = d or []
        self.z: List[float] = z or []
        self.o: List[float] = o or []
        self.w: List[float] = w or []

    def copy(self) -> '_Path':
        return _Path(list(self.d), list(self.z), list(self.o), list(self.w))

    def __len__(self):
        return len(self.d)

    def extend(self, pz: float, po: float, pi: int):
        depth = len(self.d)
        self.d.append(pi)
        self.z.append(pz)
        self.o.append(po)
        self.w.append(1.0 if depth == 0 else 0.0)
        for i in range(depth - 1, -1, -1):
            self.w[i + 1] += po * self.w[i] * (i + 1) / (depth + 1)
            self.w[i] = pz * self.w[i] * (depth - i) / (depth + 1)

    def unwind(self, i: int):
        depth = len(self.d) - 1
        one, zero = self.o[i], self.z[i]
        n = self.w[depth]
        for j in range(depth - 1, -1, -1):
            if one != 0:
                t = self.w[j]
                self.w[j] = n * (depth + 1) / ((j + 1) * one)
                n = t - self.w[j] * zero * (depth - j) / (depth + 1)
            else:
                self.w[j] = self.w[j] * (depth + 1) / (zero * (depth - j))
        for j in range(i, depth):
            self.d[j] = self.d[j + 1]
            self.z[j] = self.z[j + 1]
            self.o[j] = self.o[j + 1]
        for arr in (self.d, self.z, self.o, self.w):
            arr.pop()

    def unwound_sum(self, i: int) -> float:
        """ Sum of the weights the path would have without element i """
        depth = len(self.d) - 1
        one, zero = self.o[i], self.z[i]
        next_one = self.w[depth]
        total = 0.0
        for j in range(depth - 1, -1, -1):
            if one != 0:
                t = next_one * (depth + 1) / ((j + 1) * one)
                total += t
                next_one = self.w[j] - t * zero * (depth - j) / (depth + 1)
            else:
                total += self.w[j] * (depth + 1) / (zero * (depth - j))
        return total


def _tree_shap(tree: DecisionTree, outputs: np.ndarray, x: np.ndarray, phi: np.ndarray):
    # (node, path, zero fraction, one fraction, feature index); -1 marks the root's dummy feature
    stack: List[Tuple[int, _Path, float, float, int]] = [(0, _Path(), 1.0, 1.0, -1)]
    while stack:
        node, path, pz, po, pi = stack.pop()
        path = path.copy()
        path.extend(pz, po, pi)
        feature = int(tree.feature[node])
        if feature == LEAF:
            for i in range(1, len(path)):
                weight = path.unwound_sum(i)
                phi[path.d[i]] += weight * (path.o[i] - path.z[i]) * outputs[node]
            continue
        if x[feature] <= tree.threshold[node]:
            hot, cold = int(tree.left[node]), int(tree.right[node])
        else:
            hot, cold = int(tree.right[node]), int(tree.left[node])
        iz = io = 1.0
        for k in range(1, len(path)):
            if path.d[k] == feature:
                iz, io = path.z[k], path.o[k]
                path.unwind(k)
                break
        cover = tree.cover[node]
        stack.append((cold, path, iz * tree.cover[cold] / cover, 0.0, feature))
        stack.append((hot, path, iz * tree.cover[hot] / cover, io, feature))


def expected_output(tree: DecisionTree, outputs: np.ndarray) -> float:
    """ Cover-weighted mean of the leaf outputs """
    leaves = tree.feature == LEAF
    return float(np.dot(tree.cover[leaves], outputs[leaves]) / tree.cover[0])


def expected_value(model: ForestModel) -> float:
    base = model.base_score if model.mode == BOOSTING else 0.0
    return base + sum(expected_output(tree, model.tree_outputs(tree)) for tree in model.trees)


def _check_sample(model: ForestModel, sample) -> np.ndarray:
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1 or len(x) != model.feature_count:
        raise FeatureWidthError(f'Model expects {model.feature_count} features, got {x.shape}')
    return x


def tree_shap(model: ForestModel, sample, sample_id: str = "",
              columns: Optional[List[str]] = None) -> AttributionReport:
    x = _check_sample(model, sample)
    phi = np.zeros(model.feature_count)
    for tree in model.trees:
        _tree_shap(tree, model.tree_outputs(tree), x, phi)
    prediction = float(model.output(x.reshape(1, -1))[0])
    return AttributionReport(expected_value(model), phi, prediction, sample_id, list(columns or []))


def _conditional_expectation(tree: DecisionTree, outputs: np.ndarray, x: np.ndarray, known: np.ndarray) -> float:
    def walk(node: int) -> float:
        feature = int(tree.feature[node])
        if feature == LEAF:
            return float(outputs[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        if known[feature]:
            return walk(left if x[feature] <= tree.threshold[node] else right)
        return (tree.cover[left] * walk(left) + tree.cover[right] * walk(right)) / tree.cover[node]
    return walk(0)


def brute_force_shap(model: ForestModel, sample) -> AttributionReport:
    """ Exact Shapley values by enumerating every feature subset; exponential in the feature count """
    x = _check_sample(model, sample)
    m = model.feature_count
    base = model.base_score if model.mode == BOOSTING else 0.0
    values = np.full(1 << m, base)
    for mask in range(1 << m):
        known = np.array([(mask >> j) & 1 == 1 for j in range(m)], dtype=bool)
        for tree in model.trees:
            values[mask] += _conditional_expectation(tree, model.tree_outputs(tree), x, known)
    factorials = [math.factorial(i) for i in range(m + 1)]
    phi = np.zeros(m)
    for i in range(m):
        bit = 1 << i
        for mask in range(1 << m):
            if mask & bit:
                continue
            size = bin(mask).count('1')
            weight = factorials[size] * factorials[m - size - 1] / factorials[m]
            phi[i] += weight * (values[mask | bit] - values[mask])
    return AttributionReport(float(values[0]), phi, float(values[(1 << m) - 1]))


@dataclass
class ShapSummary:
    base_value: float
    features: List[int]
    columns: List[str]
    mean_abs: List[float]
    # rows of (column, sample id, label, usage share, feature value, shap value)
    rows: List[Tuple[str, str, int, float, float, float]]


def shap_summary(model: ForestModel, split: FeatureMatrix, top_n: int = 20,
                 reports: Optional[Sequence[AttributionReport]] = None) -> ShapSummary:
    """ Per-sample attributions of the top_n features ranked by mean absolute SHAP value """
    if split.n_rows == 0:
        raise EmptyInputError('Can not summarize attributions over an empty split')
    if reports is None:
        reports = [tree_shap(model, split.X[i], split.ids[i], split.columns) for i in range(split.n_rows)]
    shap_values = np.vstack([report.shap_values for report in reports])
    mean_abs = np.abs(shap_values).mean(axis=0)
    # stable sort keeps column order among equal means
    top = [int(j) for j in np.argsort(-mean_abs, kind='stable')[:top_n]]
    totals = split.X.sum(axis=1)
    rows = []
    for j in top:
        for i in range(split.n_rows):
            share = float(split.X[i, j] / totals[i]) if totals[i] > 0 else 0.0
            rows.append((split.columns[j], split.ids[i], int(split.y[i]), share,
                         float(split.X[i, j]), float(shap_values[i, j])))
    return ShapSummary(
        base_value=reports[0].base_value,
        features=top,
        columns=[split.columns[j] for j in top],
        mean_abs=[float(mean_abs[j]) for j in top],
        rows=rows,
    )
