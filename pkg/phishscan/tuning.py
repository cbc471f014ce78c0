"""
Exhaustive hyperparameter search scored by cross-validated accuracy.
"""
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from phishscan.evaluation import evaluate_plans, make_folds
from phishscan.features import HistogramDataset
from phishscan.logger import logger
from phishscan.schema import FoldPlan
from phishscan.utils import parallel_map, write_csv

# +1 when a larger value means a larger model, -1 when it means a smaller one
CAPACITY = {
    'n_trees': 1,
    'max_depth': 1,
    'learning_rate': 1,
    'k': -1,
    'l2': -1,
}


@dataclass
class GridPoint:
    params: Dict[str, Any]
    accuracies: List[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0

    def key(self) -> str:
        return json.dumps(self.params, sort_keys=True)


@dataclass
class TuningResult:
    family: str
    best: Dict[str, Any]
    points: List[GridPoint]


def expand_grid(grid: Mapping[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    """ Every combination of the grid values, the last parameter varying fastest """
    names = sorted(grid)
    return [dict(zip(names, values)) for values in itertools.product(*(grid[name] for name in names))]


def capacity(params: Mapping[str, Any]) -> Tuple[float, ...]:
    """ Sort key that orders grid points from the smallest model to the largest """
    key = []
    for name in sorted(params):
        value = params[name]
        if name not in CAPACITY or isinstance(value, (str, bool)):
            continue
        value = math.inf if value is None else float(value)
        key.append(CAPACITY[name] * value)
    return tuple(key)


def select_best(points: Sequence[GridPoint]) -> GridPoint:
    """ Highest mean accuracy; ties go to the smallest model, then to the lexicographically first setting """
    return min(points, key=lambda point: (-point.mean_accuracy, capacity(point.params), point.key()))


def grid_search(family: str, dataset: HistogramDataset, grid: Mapping[str, Sequence[Any]],
                plan: Optional[FoldPlan] = None, k: int = 10, seed: int = 0, stratified: bool = True,
                base_params: Optional[Mapping[str, Any]] = None, workers: int = 1) -> TuningResult:
    """
    Cross-validates every grid point on the same folds.

    Parameters missing from the grid take their value from base_params.
    """
    settings = expand_grid(grid)
    if not settings:
        raise ValueError(f'Grid for {family} has no points')
    if plan is None:
        plan = make_folds(dataset.labels, k, seed, stratified)
    folds = plan

    def evaluate(setting: Dict[str, Any]) -> GridPoint:
        params = {**dict(base_params or {}), **setting}
        records = evaluate_plans(family, dataset, [folds], params)
        return GridPoint(setting, [record.accuracy for record in records])

    points = parallel_map(evaluate, settings, workers)
    best = select_best(points)
    logger.info(f'{family}: best of {len(points)} grid points is {best.key()}'
                f' with mean accuracy {best.mean_accuracy:.4f}')
    return TuningResult(family, {**dict(base_params or {}), **best.params}, points)


def write_tuning_csv(results: Sequence[TuningResult], path: Path) -> Path:
    rows = []
    for result in results:
        best_key = json.dumps({name: result.best[name] for name in sorted(result.points[0].params)},
                              sort_keys=True)
        for point in result.points:
            rows.append([result.family, point.key(), point.mean_accuracy, point.std_accuracy,
                         point.key() == best_key])
    return write_csv(path, ['model', 'params', 'mean_accuracy', 'std_accuracy', 'selected'], rows)
