"""
Model family registry, prediction and model files.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from phishscan.errors import FeatureWidthError, ModelFormatError, OutputWriteError
from phishscan.knn import KnnModel, fit_knn
from phishscan.linear import LinearModel, train_linear
from phishscan.schema import FeatureMatrix
from phishscan.trees import BAGGING, DecisionTree, ForestModel, train_gbdt, train_random_forest

MODEL_FORMAT = 'phishscan-model'
MODEL_VERSION = 1
THRESHOLD = 0.5

Estimator = Union[ForestModel, LinearModel, KnnModel]


def _rf(features: FeatureMatrix, params: Dict[str, Any], seed: int, workers: int) -> Estimator:
    return train_random_forest(features, seed=seed, workers=workers, **params)


def _gbdt(features: FeatureMatrix, params: Dict[str, Any], seed: int, workers: int) -> Estimator:
    return train_gbdt(features, seed=seed, **params)


def _knn(features: FeatureMatrix, params: Dict[str, Any], seed: int, workers: int) -> Estimator:
    return fit_knn(features, **params)


def _logreg(features: FeatureMatrix, params: Dict[str, Any], seed: int, workers: int) -> Estimator:
    return train_linear(features, loss='logistic', **params)


def _svm(features: FeatureMatrix, params: Dict[str, Any], seed: int, workers: int) -> Estimator:
    return train_linear(features, loss='hinge', **params)


FAMILIES: Dict[str, Callable[[FeatureMatrix, Dict[str, Any], int, int], Estimator]] = {
    'rf': _rf,
    'gbdt': _gbdt,
    'knn': _knn,
    'logreg': _logreg,
    'svm': _svm,
}


@dataclass
class Prediction:
    probability: np.ndarray
    labels: np.ndarray


@dataclass
class TrainedModel:
    """ An estimator together with the training vocabulary that fixes its feature columns """
    family: str
    params: Dict[str, Any]
    vocabulary: List[str]
    estimator: Estimator

    @property
    def feature_count(self) -> int:
        return self.estimator.feature_count

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.estimator.predict_proba(X)


def train(family: str, features: FeatureMatrix, params: Optional[Dict[str, Any]] = None, seed: int = 0,
          workers: int = 1) -> TrainedModel:
    if family not in FAMILIES:
        raise ValueError(f'Unknown model family "{family}", expecting one of {", ".join(FAMILIES)}')
    params = dict(params or {})
    estimator = FAMILIES[family](features, params, seed, workers)
    return TrainedModel(family, params, list(features.columns), estimator)


def predict(model: TrainedModel, features: Union[FeatureMatrix, np.ndarray],
            threshold: float = THRESHOLD) -> Prediction:
    """ Phishing probability and hard label; a probability equal to the threshold is benign """
    X = features.X if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    if isinstance(features, FeatureMatrix) and list(features.columns) != model.vocabulary:
        raise FeatureWidthError(
            f'Feature columns do not match the model vocabulary ({features.width} vs {len(model.vocabulary)})'
        )
    if X.ndim != 2 or X.shape[1] != model.feature_count:
        raise FeatureWidthError(f'Model expects {model.feature_count} features, got {X.shape[-1]}')
    probability = np.asarray(model.predict_proba(X), dtype=np.float64)
    return Prediction(probability, (probability > threshold).astype(np.int64))


# ###########
# Model files
# ###########

def _header(model: TrainedModel) -> Dict[str, Any]:
    return {
        'format': MODEL_FORMAT,
        'version': MODEL_VERSION,
        'family': model.family,
        'params': model.params,
        'vocabulary': model.vocabulary,
    }


def _estimator_from_dict(family: str, d: Dict[str, Any]) -> Estimator:
    if family in ('rf', 'gbdt'):
        return ForestModel.from_dict(d)
    if family in ('logreg', 'svm'):
        return LinearModel.from_dict(d)
    if family == 'knn':
        return KnnModel.from_dict(d)
    raise ModelFormatError(f'Unknown model family "{family}"')


def _check_header(header: Dict[str, Any], path: Path):
    if header.get('format') != MODEL_FORMAT:
        raise ModelFormatError(f'{path} is not a model file')
    if header.get('version') != MODEL_VERSION:
        raise ModelFormatError(f'{path} has model format version {header.get("version")}, expecting {MODEL_VERSION}')


def _forest_arrays(forest: ForestModel) -> Dict[str, np.ndarray]:
    trees = forest.trees
    offsets = np.cumsum([0] + [tree.n_nodes for tree in trees]).astype(np.int64)
    arrays = {'tree_offsets': offsets}
    for name in ('feature', 'threshold', 'left', 'right', 'cover', 'value'):
        parts = [getattr(tree, name) for tree in trees]
        dtype = np.int64 if name in ('feature', 'left', 'right') else np.float64
        arrays[name] = np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)
    return arrays


def _forest_from_arrays(meta: Dict[str, Any], arrays) -> ForestModel:
    offsets = arrays['tree_offsets']
    trees = []
    for start, end in zip(offsets[:-1], offsets[1:]):
        trees.append(DecisionTree(**{
            name: arrays[name][start:end].copy()
            for name in ('feature', 'threshold', 'left', 'right', 'cover', 'value')
        }))
    return ForestModel(trees, meta['mode'], int(meta['feature_count']), float(meta['learning_rate']),
                       float(meta['base_score']))


def save_model(model: TrainedModel, path: Path) -> Path:
    """ Versioned JSON, or compact numpy binary when the file name ends in .npz """
    path = Path(path)
    header = _header(model)
    estimator = model.estimator
    try:
        if path.suffix == '.npz':
            if isinstance(estimator, ForestModel):
                meta = {k: v for k, v in estimator.to_dict().items() if k != 'trees'}
                arrays = _forest_arrays(estimator)
            elif isinstance(estimator, LinearModel):
                meta = {k: v for k, v in estimator.to_dict().items() if k != 'weights'}
                arrays = {'weights': estimator.weights}
            else:
                meta = {'k': estimator.k}
                arrays = {'X': estimator.X, 'y': estimator.y}
            header['estimator'] = meta
            np.savez_compressed(path, header=np.array(json.dumps(header)), **arrays)
        else:
            header['estimator'] = estimator.to_dict()
            with path.open('w') as fout:
                json.dump(header, fout)
    except OSError as e:
        raise OutputWriteError(f'Can not write model to {path}: {e}')
    return path


def load_model(path: Path) -> TrainedModel:
    path = Path(path)
    estimator: Estimator
    if path.suffix == '.npz':
        with np.load(path, allow_pickle=False) as arrays:
            header = json.loads(str(arrays['header']))
            _check_header(header, path)
            family, meta = header['family'], header['estimator']
            if family in ('rf', 'gbdt'):
                estimator = _forest_from_arrays(meta, arrays)
            elif family in ('logreg', 'svm'):
                estimator = LinearModel(arrays['weights'].copy(), float(meta['bias']), meta['loss'],
                                        float(meta['l2']), int(meta.get('iterations', 0)))
            else:
                estimator = KnnModel(arrays['X'].copy(), arrays['y'].copy(), int(meta['k']))
    else:
        with path.open() as fin:
            try:
                header = json.load(fin)
            except json.JSONDecodeError as e:
                raise ModelFormatError(f'{path} is not a model file: {e}')
        _check_header(header, path)
        estimator = _estimator_from_dict(header['family'], header['estimator'])
    return TrainedModel(header['family'], header['params'], header['vocabulary'], estimator)


def is_forest(model: TrainedModel) -> bool:
    return isinstance(model.estimator, ForestModel)


def describe(model: TrainedModel) -> str:
    estimator = model.estimator
    if isinstance(estimator, ForestModel):
        kind = 'bagged' if estimator.mode == BAGGING else 'boosted'
        return f'{model.family}: {len(estimator.trees)} {kind} trees over {estimator.feature_count} features'
    if isinstance(estimator, LinearModel):
        return f'{model.family}: linear {estimator.loss} model over {estimator.feature_count} features'
    return f'{model.family}: {estimator.k}-nearest neighbours over {len(estimator.y)} training rows'
