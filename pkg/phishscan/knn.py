from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from phishscan.errors import DegenerateTrainingError, EmptyInputError, FeatureWidthError
from phishscan.schema import FeatureMatrix

# float64 cells per distance block
BLOCK_CELLS = 4_000_000


@dataclass
class KnnModel:
    """ Exact Euclidean k-nearest neighbours; distance ties go to the lower training index, vote ties to benign """
    X: np.ndarray
    y: np.ndarray
    k: int

    @property
    def feature_count(self) -> int:
        return self.X.shape[1]

    def neighbors(self, Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.feature_count:
            raise FeatureWidthError(f'Model expects {self.feature_count} features, got {Q.shape[-1]}')
        n, width = self.X.shape
        block = max(1, BLOCK_CELLS // max(1, n * width))
        out = np.zeros((Q.shape[0], self.k), dtype=np.int64)
        for start in range(0, Q.shape[0], block):
            diff = Q[start:start + block, None, :] - self.X[None, :, :]
            dist = np.sqrt((diff * diff).sum(axis=2))
            out[start:start + block] = np.argsort(dist, axis=1, kind='stable')[:, :self.k]
        return out

    def predict_proba(self, Q: np.ndarray) -> np.ndarray:
        if len(Q) == 0:
            return np.zeros(0)
        return self.y[self.neighbors(Q)].mean(axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {'X': self.X.tolist(), 'y': self.y.tolist(), 'k': self.k}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'KnnModel':
        width = len(d['X'][0]) if d['X'] else 0
        return cls(np.array(d['X'], dtype=np.float64).reshape(-1, width), np.array(d['y'], dtype=np.int64),
                   int(d['k']))


def fit_knn(features: FeatureMatrix, k: int = 5) -> KnnModel:
    if features.n_rows == 0:
        raise EmptyInputError('kNN needs a non-empty training set')
    if not 1 <= k <= features.n_rows:
        raise DegenerateTrainingError(f'k={k} must lie between 1 and the training size {features.n_rows}')
    return KnnModel(features.X.copy(), features.y.copy(), k)


def knn_predict(train: FeatureMatrix, query, k: int) -> Tuple[int, List[int]]:
    """ Majority label among the k nearest training rows, and their indices nearest first """
    model = fit_knn(train, k)
    neighbors = model.neighbors(np.asarray(query, dtype=np.float64).reshape(1, -1))[0]
    phishing = int(model.y[neighbors].sum())
    return int(phishing * 2 > k), [int(i) for i in neighbors]
