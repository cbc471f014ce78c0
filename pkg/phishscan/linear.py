"""
L2-regularized linear classifiers trained by full-batch gradient descent:
logistic regression and a linear SVM (hinge loss).
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from phishscan.errors import FeatureWidthError, ModelFormatError
from phishscan.schema import FeatureMatrix
from phishscan.trees import check_trainable, sigmoid

LOSSES = ('logistic', 'hinge')
ARMIJO_C = 1e-4
MIN_STEP = 1e-12


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    loss: str
    l2: float
    iterations: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def feature_count(self) -> int:
        return len(self.weights)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise FeatureWidthError(f'Model expects {self.feature_count} features, got {X.shape[-1]}')
        return X @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        # the hinge margin goes through the same link so both losses share the 0.5 threshold
        return sigmoid(self.decision_function(X))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'weights': self.weights.tolist(),
            'bias': self.bias,
            'loss': self.loss,
            'l2': self.l2,
            'iterations': self.iterations,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'LinearModel':
        if d.get('loss') not in LOSSES:
            raise ModelFormatError(f'Unknown linear loss {d.get("loss")}')
        return cls(np.array(d['weights'], dtype=np.float64), float(d['bias']), d['loss'], float(d['l2']),
                   int(d.get('iterations', 0)))


def loss_and_gradient(weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, loss: str,
                      l2: float) -> Tuple[float, np.ndarray, float]:
    """ Mean loss plus l2/2 * |w|^2 (bias not regularized), with its (sub)gradient """
    signs = 2.0 * y - 1.0
    margins = signs * (X @ weights + bias)
    n = len(y)
    if loss == 'logistic':
        value = float(np.logaddexp(0.0, -margins).mean())
        coef = -signs * sigmoid(-margins)
    elif loss == 'hinge':
        slack = 1.0 - margins
        value = float(np.maximum(slack, 0.0).mean())
        coef = np.where(slack > 0, -signs, 0.0)
    else:
        raise ValueError(f'Unknown loss "{loss}", expecting one of {", ".join(LOSSES)}')
    value += 0.5 * l2 * float(weights @ weights)
    grad_w = X.T @ coef / n + l2 * weights
    grad_b = float(coef.sum() / n)
    return value, grad_w, grad_b


def train_linear(features: FeatureMatrix, loss: str = 'logistic', l2: float = 1e-2, max_iter: int = 1000,
                 tol: float = 1e-6, backtracking: bool = True, learning_rate: float = 0.1) -> LinearModel:
    """
    Gradient descent from all-zero weights until the gradient norm drops below tol.

    With backtracking, each step satisfies the Armijo condition. Without it, a fixed
    learning_rate is used and training stops at the first step that would raise the loss.
    Either way the recorded loss history is non-increasing.
    """
    if loss not in LOSSES:
        raise ValueError(f'Unknown loss "{loss}", expecting one of {", ".join(LOSSES)}')
    check_trainable(features)
    X, y = features.X, features.y.astype(np.float64)
    weights = np.zeros(features.width)
    bias = 0.0
    value, grad_w, grad_b = loss_and_gradient(weights, bias, X, y, loss, l2)
    history = [value]
    step = 1.0
    iterations = 0
    for _ in range(max_iter):
        sq_norm = float(grad_w @ grad_w) + grad_b * grad_b
        if np.sqrt(sq_norm) < tol:
            break
        if backtracking:
            step = min(step * 2.0, 1e6)
            while step >= MIN_STEP:
                candidate = loss_and_gradient(weights - step * grad_w, bias - step * grad_b, X, y, loss, l2)
                if candidate[0] <= value - ARMIJO_C * step * sq_norm:
                    break
                step *= 0.5
            if step < MIN_STEP:
                break
        else:
            step = learning_rate
            candidate = loss_and_gradient(weights - step * grad_w, bias - step * grad_b, X, y, loss, l2)
            if candidate[0] > value:
                break
        weights = weights - step * grad_w
        bias = bias - step * grad_b
        value, grad_w, grad_b = candidate
        history.append(value)
        iterations += 1
    return LinearModel(weights, bias, loss, l2, iterations, history)
