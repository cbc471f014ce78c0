import json

import numpy as np
import pytest

from phishscan.errors import DegenerateTrainingError, FeatureWidthError, ModelFormatError
from phishscan.knn import fit_knn, knn_predict
from phishscan.linear import loss_and_gradient, train_linear
from phishscan.models import describe, is_forest, load_model, predict, save_model, train
from phishscan.schema import FeatureMatrix

FAST_PARAMS = {
    'rf': {'n_trees': 5},
    'gbdt': {'n_trees': 10, 'max_depth': 2, 'learning_rate': 0.3},
    'knn': {'k': 3},
    'logreg': {'l2': 1e-3, 'max_iter': 300},
    'svm': {'l2': 1e-3, 'max_iter': 300},
}


def blobs(n: int = 30) -> FeatureMatrix:
    rng = np.random.default_rng(11)
    y = np.array([i % 2 for i in range(n)])
    X = rng.normal(0.0, 0.3, (n, 3)) + np.outer(2.0 * y - 1.0, [2.0, -1.0, 0.0])
    return FeatureMatrix(X, y, [f'c{i}' for i in range(n)], ['CALLER', 'SSTORE', 'STOP'])


@pytest.mark.parametrize('family', sorted(FAST_PARAMS))
def test_every_family_fits_blobs(family):
    features = blobs()
    model = train(family, features, FAST_PARAMS[family])
    assert model.vocabulary == features.columns
    prediction = predict(model, features)
    assert (prediction.labels == features.y).mean() >= 0.9
    assert ((prediction.probability >= 0) & (prediction.probability <= 1)).all()


@pytest.mark.parametrize('family,suffix', [
    ('rf', '.json'), ('rf', '.npz'),
    ('gbdt', '.json'), ('gbdt', '.npz'),
    ('knn', '.json'), ('knn', '.npz'),
    ('logreg', '.json'), ('svm', '.npz'),
])
def test_model_files(tmp_path, family, suffix):
    features = blobs()
    model = train(family, features, FAST_PARAMS[family])
    path = save_model(model, tmp_path / f'model{suffix}')
    loaded = load_model(path)
    assert loaded.family == family
    assert loaded.vocabulary == model.vocabulary
    assert loaded.params == model.params
    np.testing.assert_array_equal(predict(loaded, features).probability, predict(model, features).probability)


def test_json_model_file_is_versioned(tmp_path):
    path = save_model(train('logreg', blobs(), FAST_PARAMS['logreg']), tmp_path / 'model.json')
    header = json.loads(path.read_text())
    assert header['format'] == 'phishscan-model'
    assert header['version'] == 1
    header['version'] = 99
    path.write_text(json.dumps(header))
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_not_a_model_file(tmp_path):
    path = tmp_path / 'model.json'
    path.write_text('{"hello": 1}')
    with pytest.raises(ModelFormatError):
        load_model(path)
    path.write_text('not json')
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_unknown_family():
    with pytest.raises(ValueError):
        train('transformer', blobs())


def test_predict_checks_columns():
    features = blobs()
    model = train('knn', features, {'k': 1})
    renamed = FeatureMatrix(features.X, features.y, features.ids, ['A', 'B', 'C'])
    with pytest.raises(FeatureWidthError):
        predict(model, renamed)
    with pytest.raises(FeatureWidthError):
        predict(model, np.zeros((2, 4)))


def test_threshold_tie_is_benign():
    features = FeatureMatrix(np.array([[0.0], [2.0]]), np.array([0, 1]), ['a', 'b'], ['ADD'])
    model = train('knn', features, {'k': 2})
    prediction = predict(model, np.array([[1.0]]))
    assert prediction.probability.tolist() == [0.5]
    assert prediction.labels.tolist() == [0]


def test_describe():
    assert describe(train('rf', blobs(), {'n_trees': 2})) == 'rf: 2 bagged trees over 3 features'
    assert is_forest(train('gbdt', blobs(), {'n_trees': 1}))
    assert not is_forest(train('knn', blobs(), {'k': 1}))


def test_knn_neighbors_and_ties():
    features = FeatureMatrix(np.array([[0.0], [1.0], [1.0], [5.0]]), np.array([0, 1, 0, 1]),
                             ['a', 'b', 'c', 'd'], ['ADD'])
    label, neighbors = knn_predict(features, [1.0], k=3)
    # equidistant rows keep training order
    assert neighbors == [1, 2, 0]
    assert label == 0
    label, neighbors = knn_predict(features, [4.0], k=1)
    assert (label, neighbors) == (1, [3])


def test_knn_bad_k():
    with pytest.raises(DegenerateTrainingError):
        fit_knn(blobs(4), k=5)


def test_knn_blocks_match(monkeypatch):
    features = blobs()
    expected = fit_knn(features, 3).neighbors(features.X)
    monkeypatch.setattr('phishscan.knn.BLOCK_CELLS', 1)
    np.testing.assert_array_equal(fit_knn(features, 3).neighbors(features.X), expected)


@pytest.mark.parametrize('loss', ['logistic', 'hinge'])
@pytest.mark.parametrize('backtracking', [True, False])
def test_linear_loss_history_is_non_increasing(loss, backtracking):
    model = train_linear(blobs(), loss=loss, l2=1e-2, max_iter=100, backtracking=backtracking)
    assert model.iterations > 0
    assert all(b <= a for a, b in zip(model.history, model.history[1:]))


def test_linear_gradient_matches_finite_differences():
    features = blobs(10)
    X, y = features.X, features.y.astype(float)
    w = np.array([0.3, -0.2, 0.1])
    value, grad_w, grad_b = loss_and_gradient(w, 0.05, X, y, 'logistic', 0.1)
    eps = 1e-6
    for j in range(3):
        step = np.zeros(3)
        step[j] = eps
        numeric = (loss_and_gradient(w + step, 0.05, X, y, 'logistic', 0.1)[0]
                   - loss_and_gradient(w - step, 0.05, X, y, 'logistic', 0.1)[0]) / (2 * eps)
        assert grad_w[j] == pytest.approx(numeric, rel=1e-4, abs=1e-8)
    numeric_b = (loss_and_gradient(w, 0.05 + eps, X, y, 'logistic', 0.1)[0]
                 - loss_and_gradient(w, 0.05 - eps, X, y, 'logistic', 0.1)[0]) / (2 * eps)
    assert grad_b == pytest.approx(numeric_b, rel=1e-4, abs=1e-8)


def test_linear_zero_data_gives_half():
    features = FeatureMatrix(np.zeros((4, 2)), np.array([0, 1, 0, 1]), list('abcd'), ['A', 'B'])
    model = train_linear(features)
    np.testing.assert_allclose(model.predict_proba(np.zeros((1, 2))), [0.5])


def test_labels_are_monotone_in_threshold():
    features = blobs()
    model = train('rf', features, FAST_PARAMS['rf'])
    probability = predict(model, features).probability
    thresholds = np.unique(np.concatenate([np.linspace(0.0, 1.0, 21), probability]))
    labels = np.array([predict(model, features, threshold=t).labels for t in thresholds])
    assert (np.diff(labels, axis=0) <= 0).all()
    assert labels[0].sum() == (probability > 0.0).sum()
    assert labels[-1].sum() == 0


def exhaustive_knn(X, y, query, k):
    order = sorted(range(len(X)), key=lambda i: (int(((X[i] - query) ** 2).sum()), i))[:k]
    return int(2 * sum(int(y[i]) for i in order) > k), order


def test_knn_matches_exhaustive_search():
    rng = np.random.default_rng(23)
    for _ in range(40):
        n = int(rng.integers(1, 201))
        # small integer coordinates give many exact distance ties
        X = rng.integers(0, 6, (n, 3)).astype(np.float64)
        y = rng.integers(0, 2, n)
        features = FeatureMatrix(X, y, [f'c{i}' for i in range(n)], ['CALLER', 'SSTORE', 'STOP'])
        k = int(rng.integers(1, min(n, 12) + 1))
        for query in rng.integers(0, 6, (5, 3)).astype(np.float64):
            assert knn_predict(features, query, k) == exhaustive_knn(X, y, query, k)


def test_knn_vote_tie_is_benign():
    features = FeatureMatrix(np.array([[1.0], [-1.0], [3.0], [-3.0]]), np.array([1, 0, 1, 0]),
                             ['a', 'b', 'c', 'd'], ['ADD'])
    label, neighbors = knn_predict(features, [0.0], k=2)
    assert neighbors == [0, 1]
    assert label == 0
    label, neighbors = knn_predict(features, [0.0], k=3)
    assert label == 1
