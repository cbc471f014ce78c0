import numpy as np
import pytest

from phishscan.errors import DegenerateTrainingError, FeatureWidthError, ModelFormatError
from phishscan.schema import FeatureMatrix
from phishscan.trees import (
    BAGGING,
    BOOSTING,
    LEAF,
    DecisionTree,
    ForestModel,
    grow_tree,
    resolve_max_features,
    sigmoid,
    train_gbdt,
    train_random_forest,
)


def separable(n: int = 20) -> FeatureMatrix:
    rng = np.random.default_rng(5)
    y = np.array([i % 2 for i in range(n)])
    X = np.column_stack([
        y * 10 + rng.integers(0, 3, n),
        rng.integers(0, 5, n),
        np.ones(n),
    ]).astype(np.float64)
    return FeatureMatrix(X, y, [f'c{i}' for i in range(n)], ['CALLER', 'ADD', 'STOP'])


def test_grow_tree_single_split():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    tree = grow_tree(X, np.array([0, 0, 1, 1]))
    assert tree.n_nodes == 3
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 2.5
    assert tree.is_leaf(1) and tree.is_leaf(2)
    assert tree.cover.tolist() == [4.0, 2.0, 2.0]
    assert tree.predict(X).tolist() == [0.0, 0.0, 1.0, 1.0]
    assert tree.depth() == 1


def test_pure_node_is_a_leaf():
    tree = grow_tree(np.array([[1.0], [2.0]]), np.array([1, 1]))
    assert tree.n_nodes == 1
    assert tree.feature[0] == LEAF
    assert tree.value[0] == 1.0


def test_max_depth():
    X = np.arange(8, dtype=np.float64).reshape(-1, 1)
    tree = grow_tree(X, np.array([0, 1, 0, 1, 0, 1, 0, 1]), max_depth=2)
    assert tree.depth() <= 2


def test_min_samples_leaf():
    X = np.arange(6, dtype=np.float64).reshape(-1, 1)
    tree = grow_tree(X, np.array([1, 0, 0, 0, 0, 0]), min_samples_leaf=2)
    leaves = [node for node in range(tree.n_nodes) if tree.is_leaf(node)]
    assert all(tree.cover[node] >= 2 for node in leaves)


def test_zero_weight_rows_are_ignored():
    X = np.array([[1.0], [2.0], [3.0]])
    tree = grow_tree(X, np.array([0, 1, 1]), weight=np.array([0.0, 1.0, 1.0]))
    assert tree.n_nodes == 1
    assert tree.cover[0] == 2.0


def test_tree_dict_round_trip():
    tree = grow_tree(np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([0, 0, 1, 1]))
    again = DecisionTree.from_dict(tree.to_dict())
    assert again.to_dict() == tree.to_dict()


def test_tree_dict_validation():
    d = grow_tree(np.array([[1.0], [2.0]]), np.array([0, 1])).to_dict()
    d['cover'] = d['cover'][:1]
    with pytest.raises(ModelFormatError):
        DecisionTree.from_dict(d)
    del d['value']
    with pytest.raises(ModelFormatError):
        DecisionTree.from_dict(d)


@pytest.mark.parametrize('max_features,n_features,expected', [
    ('sqrt', 16, 4),
    ('sqrt', 1, 1),
    ('all', 7, 7),
    (3, 7, 3),
    (30, 7, 7),
])
def test_resolve_max_features(max_features, n_features, expected):
    assert resolve_max_features(max_features, n_features) == expected


def test_random_forest_fits_separable_data():
    features = separable()
    forest = train_random_forest(features, n_trees=15, seed=1)
    assert forest.mode == BAGGING
    assert len(forest.trees) == 15
    proba = forest.predict_proba(features.X)
    assert ((proba > 0.5).astype(int) == features.y).all()
    assert ((proba >= 0) & (proba <= 1)).all()


def test_random_forest_is_deterministic():
    features = separable()
    a = train_random_forest(features, n_trees=5, seed=3)
    b = train_random_forest(features, n_trees=5, seed=3, workers=4)
    assert [tree.to_dict() for tree in a.trees] == [tree.to_dict() for tree in b.trees]


def test_random_forest_trees_do_not_depend_on_tree_count():
    features = separable()
    small = train_random_forest(features, n_trees=3, seed=7)
    large = train_random_forest(features, n_trees=6, seed=7)
    assert [tree.to_dict() for tree in small.trees] == [tree.to_dict() for tree in large.trees[:3]]


def test_gbdt_fits_separable_data():
    features = separable()
    model = train_gbdt(features, n_trees=20, max_depth=2, learning_rate=0.3)
    assert model.mode == BOOSTING
    assert model.base_score == pytest.approx(0.0)
    proba = model.predict_proba(features.X)
    assert ((proba > 0.5).astype(int) == features.y).all()
    np.testing.assert_allclose(sigmoid(model.output(features.X)), proba)


def test_gbdt_base_score_is_prior_log_odds():
    features = separable(8)
    y = np.array([1, 0, 0, 0, 0, 0, 0, 1])
    features = FeatureMatrix(features.X, y, features.ids, features.columns)
    model = train_gbdt(features, n_trees=1)
    assert model.base_score == pytest.approx(np.log(2 / 6))


def test_forest_dict_round_trip():
    forest = train_random_forest(separable(), n_trees=3)
    again = ForestModel.from_dict(forest.to_dict())
    X = separable().X
    np.testing.assert_array_equal(again.predict_proba(X), forest.predict_proba(X))


def test_forest_bad_mode():
    d = train_random_forest(separable(), n_trees=1).to_dict()
    d['mode'] = 'stacking'
    with pytest.raises(ModelFormatError):
        ForestModel.from_dict(d)


def test_forest_width_check():
    forest = train_random_forest(separable(), n_trees=2)
    with pytest.raises(FeatureWidthError):
        forest.predict_proba(np.zeros((1, 2)))


@pytest.mark.parametrize('y', [[1, 1, 1, 1], [0]])
def test_degenerate_training(y):
    features = FeatureMatrix(np.zeros((len(y), 1)), np.array(y), [f'c{i}' for i in range(len(y))], ['ADD'])
    with pytest.raises(DegenerateTrainingError):
        train_random_forest(features, n_trees=1)
    with pytest.raises(DegenerateTrainingError):
        train_gbdt(features, n_trees=1)


def test_bagging_vote_ignores_tree_order():
    features = separable(30)
    forest = train_random_forest(features, n_trees=9, max_depth=2, seed=12)
    order = np.random.default_rng(3).permutation(len(forest.trees))
    shuffled = ForestModel([forest.trees[i] for i in order], BAGGING, forest.feature_count)
    X = np.random.default_rng(4).integers(0, 14, (25, 3)).astype(np.float64)
    np.testing.assert_array_equal(shuffled.predict_proba(X), forest.predict_proba(X))
