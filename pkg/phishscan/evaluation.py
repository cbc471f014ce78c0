"""
Cross-validation, scalability and time-resistance experiments over histogram features.
"""
import csv
from collections import OrderedDict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from time import perf_counter
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from phishscan.errors import (
    EmptyInputError,
    ExperimentError,
    FoldError,
    LengthMismatchError,
    MetricsFormatError,
    PhishscanError,
)
from phishscan.features import HistogramDataset
from phishscan.logger import logger
from phishscan.models import predict, train
from phishscan.schema import FoldPlan, Label, MetricsRecord, TimeWindowPlan
from phishscan.utils import parallel_map, write_csv

METRIC_COLUMNS = [
    'model', 'split', 'run', 'fold', 'train_size', 'test_size',
    'accuracy', 'precision', 'recall', 'f1', 'macro_precision', 'macro_recall', 'macro_f1',
    'train_time_s', 'infer_time_s',
]
SCORES = ('accuracy', 'precision', 'recall', 'f1', 'macro_precision', 'macro_recall', 'macro_f1')
SUMMARY_VALUES = SCORES + MetricsRecord.TIMING


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _f1(precision: float, recall: float) -> float:
    return _ratio(2 * precision * recall, precision + recall)


def compute_metrics(predictions, labels) -> Dict[str, float]:
    """
    Accuracy plus precision, recall and F1 for the phishing class and macro-averaged
    over both classes. A ratio with a zero denominator is recorded as 0.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(predictions) != len(labels):
        raise LengthMismatchError(f'{len(predictions)} predictions for {len(labels)} labels')
    if len(labels) == 0:
        raise EmptyInputError('Can not compute metrics over zero samples')
    per_class: Dict[Label, Tuple[float, float, float]] = {}
    for label in Label:
        tp = int(np.sum((predictions == label) & (labels == label)))
        fp = int(np.sum((predictions == label) & (labels != label)))
        fn = int(np.sum((predictions != label) & (labels == label)))
        precision, recall = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        per_class[label] = (precision, recall, _f1(precision, recall))
    precision, recall, f1 = per_class[Label.PHISHING]
    return {
        'accuracy': float(np.mean(predictions == labels)),
        'precision': precision,
        'recall': recall,
        'f1': f1,
        'macro_precision': float(np.mean([p for p, _, _ in per_class.values()])),
        'macro_recall': float(np.mean([r for _, r, _ in per_class.values()])),
        'macro_f1': float(np.mean([f for _, _, f in per_class.values()])),
    }


def make_folds(labels, k: int, seed: int, stratified: bool = True) -> FoldPlan:
    """
    Deterministic k-fold partition. Samples are shuffled (per class when stratified) and dealt
    round-robin, so fold sizes and per-fold class counts differ by at most one.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise FoldError(f'k must be at least 2, got {k}')
    if len(labels) < k:
        raise FoldError(f'Can not split {len(labels)} samples into {k} folds')
    rng = np.random.default_rng(seed)
    if stratified:
        order = []
        for label in Label:
            members = np.flatnonzero(labels == label)
            if 0 < len(members) < k:
                raise FoldError(f'Class {label} has {len(members)} samples, fewer than k={k}')
            order.append(rng.permutation(members))
        dealt = np.concatenate(order)
    else:
        dealt = rng.permutation(len(labels))
    assignments = np.zeros(len(labels), dtype=np.int64)
    assignments[dealt] = np.arange(len(labels)) % k
    return FoldPlan(k, seed, stratified, assignments)


def fold_seed(seed: int, fold: int) -> int:
    """ Independent training seed for one fold of a run """
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


@dataclass
class _FoldTask:
    run: int
    seed: int
    fold: int
    train: np.ndarray
    test: np.ndarray


def _evaluate(family: str, dataset: HistogramDataset, task: _FoldTask, params: Mapping[str, Any],
              split: str) -> MetricsRecord:
    try:
        train_split, test_split = dataset.matrices(task.train, task.test)
        started = perf_counter()
        model = train(family, train_split, dict(params), seed=fold_seed(task.seed, task.fold))
        trained = perf_counter()
        prediction = predict(model, test_split)
        inferred = perf_counter()
        metrics: Dict[str, Any] = compute_metrics(prediction.labels, test_split.y)
    except (PhishscanError, ValueError) as e:
        raise ExperimentError(str(e), family, task.run, task.fold) from e
    return MetricsRecord(
        model=family,
        run=task.run,
        fold=task.fold,
        train_time_s=trained - started,
        infer_time_s=inferred - trained,
        train_size=len(task.train),
        test_size=len(task.test),
        split=split,
        **metrics,
    )


def _resolve_seeds(runs: Optional[int], seeds: Optional[Sequence[int]]) -> List[int]:
    if seeds is None:
        return list(range(runs if runs is not None else 1))
    if runs is not None and len(seeds) != runs:
        raise FoldError(f'{len(seeds)} seeds given for {runs} runs')
    return list(seeds)


def evaluate_plans(family: str, dataset: HistogramDataset, plans: Sequence[FoldPlan],
                   params: Optional[Mapping[str, Any]] = None, workers: int = 1,
                   split: str = '') -> List[MetricsRecord]:
    """ Trains and tests one model per fold of every plan; plan i is recorded as run i """
    tasks = [
        _FoldTask(run, plan.seed, fold, train_idx, test_idx)
        for run, plan in enumerate(plans)
        for fold, (train_idx, test_idx) in enumerate(plan.splits())
    ]
    fold_params = dict(params or {})
    return parallel_map(lambda task: _evaluate(family, dataset, task, fold_params, split), tasks, workers)


def run_cv(family: str, dataset: HistogramDataset, k: int = 10, runs: Optional[int] = None,
           seeds: Optional[Sequence[int]] = None, params: Optional[Mapping[str, Any]] = None,
           stratified: bool = True, workers: int = 1, split: str = '') -> List[MetricsRecord]:
    """
    k-fold cross-validation repeated once per seed, giving k * runs records.

    The vocabulary of every fold comes from its own training rows. Folds run in parallel when
    workers > 1; the records are the same for any worker count apart from timing.
    """
    if len(dataset) == 0:
        raise EmptyInputError('Can not cross-validate an empty corpus')
    plans = [make_folds(dataset.labels, k, seed, stratified) for seed in _resolve_seeds(runs, seeds)]
    records = evaluate_plans(family, dataset, plans, params, workers, split)
    logger.info(f'{family}: {len(records)} folds evaluated, mean accuracy '
                f'{np.mean([r.accuracy for r in records]):.4f}')
    return records


# ###########
# Scalability
# ###########

def fraction_label(fraction: float) -> str:
    return str(Fraction(fraction).limit_denominator(100))


def nested_subsets(labels, fractions: Sequence[float], seed: int) -> Dict[float, np.ndarray]:
    """
    Stratified random subsets, one per fraction, nested for a fixed seed: each class is
    shuffled once and every fraction takes a prefix of it. Rows keep corpus order.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    shuffled = [rng.permutation(np.flatnonzero(labels == label)) for label in Label]
    subsets: Dict[float, np.ndarray] = {}
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise FoldError(f'Fraction {fraction} is outside (0, 1]')
        parts = [members[:int(round(fraction * len(members)))] for members in shuffled]
        subsets[fraction] = np.sort(np.concatenate(parts))
    return subsets


@dataclass
class TimingRow:
    model: str
    split: str
    train_size: int
    train_time_s: float
    infer_time_s: float
    train_change: Optional[float] = None
    infer_change: Optional[float] = None

    COLUMNS = ('model', 'split', 'train_size', 'train_time_s', 'infer_time_s', 'train_change', 'infer_change')

    def row(self) -> Tuple[Any, ...]:
        return tuple(getattr(self, name) for name in self.COLUMNS)


@dataclass
class ScalabilityResult:
    records: List[MetricsRecord]
    timing: List[TimingRow]


def _change(current: float, previous: Optional[float]) -> Optional[float]:
    if previous is None or previous <= 0:
        return None
    return (current - previous) / previous


def timing_table(records: Sequence[MetricsRecord], fractions: Sequence[float]) -> List[TimingRow]:
    """ Mean train and inference seconds per model and split, with the relative change against the previous split """
    rows = []
    for family in OrderedDict.fromkeys(record.model for record in records):
        previous: Tuple[Optional[float], Optional[float]] = (None, None)
        for fraction in sorted(fractions):
            label = fraction_label(fraction)
            selected = [r for r in records if r.model == family and r.split == label]
            if not selected:
                continue
            train_time = float(np.mean([r.train_time_s for r in selected]))
            infer_time = float(np.mean([r.infer_time_s for r in selected]))
            rows.append(TimingRow(family, label, int(np.mean([r.train_size for r in selected])), train_time,
                                  infer_time, _change(train_time, previous[0]), _change(infer_time, previous[1])))
            previous = (train_time, infer_time)
    return rows


def run_scalability(families: Sequence[str], dataset: HistogramDataset,
                    fractions: Sequence[float] = (1 / 3, 2 / 3, 1.0), k: int = 10, seeds: Sequence[int] = (0, 1, 2),
                    params: Optional[Mapping[str, Mapping[str, Any]]] = None, stratified: bool = True,
                    workers: int = 1) -> ScalabilityResult:
    """ Cross-validation on nested stratified subsets of the corpus, one subset draw per seed """
    params = params or {}
    records: List[MetricsRecord] = []
    for run, seed in enumerate(seeds):
        subsets = nested_subsets(dataset.labels, fractions, seed)
        for fraction in sorted(fractions):
            rows = subsets[fraction]
            counts = np.bincount(dataset.labels[rows], minlength=len(Label))
            if stratified and counts.min() < k:
                raise FoldError(f'Fraction {fraction_label(fraction)} leaves {counts.min()} samples'
                                f' in the smallest class, fewer than k={k}')
            subset = dataset.subset(rows)
            for family in families:
                for record in run_cv(family, subset, k, seeds=[seed], params=params.get(family), stratified=stratified,
                                     workers=workers, split=fraction_label(fraction)):
                    record.run = run
                    records.append(record)
    return ScalabilityResult(records, timing_table(records, fractions))


# ###############
# Time resistance
# ###############

def aut(f1_series: Sequence[float]) -> float:
    """ Area under the F1-over-time curve by the trapezoid rule, normalized to [0, 1] """
    values = np.asarray(f1_series, dtype=np.float64)
    if len(values) < 2:
        raise ValueError(f'AUT needs at least 2 points, got {len(values)}')
    return float(np.sum((values[1:] + values[:-1]) / 2) / (len(values) - 1))


@dataclass
class TimeResistanceResult:
    records: List[MetricsRecord]
    aut: Dict[str, Optional[float]]
    missing: List[str]


def run_time_resistance(families: Sequence[str], dataset: HistogramDataset, plan: TimeWindowPlan, seed: int = 0,
                        params: Optional[Mapping[str, Mapping[str, Any]]] = None) -> TimeResistanceResult:
    """
    Trains once on the training months and evaluates every test month separately.

    A test month without samples is recorded as missing and left out of the AUT.
    """
    params = params or {}
    train_rows = [i for i, month in enumerate(dataset.months) if plan.in_train(month)]
    if not train_rows:
        raise EmptyInputError(f'No samples in the training months {plan.train_months[0]}..{plan.train_months[1]}')
    tests: List[Tuple[int, str, List[int]]] = []
    missing: List[str] = []
    for position, month in enumerate(plan.test_months):
        rows = [i for i, m in enumerate(dataset.months) if m == month]
        if rows:
            tests.append((position, month, rows))
        else:
            missing.append(month)
            logger.warning(f'No samples deployed in test month {month}, excluded from AUT')
    vocabulary = dataset.vocabulary(train_rows)
    train_split = dataset.matrix(vocabulary, train_rows)
    records: List[MetricsRecord] = []
    scores: Dict[str, Optional[float]] = {}
    for family in families:
        try:
            started = perf_counter()
            model = train(family, train_split, dict(params.get(family) or {}), seed=fold_seed(seed, 0))
            train_time = perf_counter() - started
        except (PhishscanError, ValueError) as e:
            raise ExperimentError(str(e), family) from e
        series: List[float] = []
        for position, month, rows in tests:
            test_split = dataset.matrix(vocabulary, rows)
            started = perf_counter()
            prediction = predict(model, test_split)
            infer_time = perf_counter() - started
            metrics: Dict[str, Any] = compute_metrics(prediction.labels, test_split.y)
            records.append(MetricsRecord(model=family, run=0, fold=position, train_time_s=train_time,
                                         infer_time_s=infer_time, train_size=len(train_rows), test_size=len(rows),
                                         split=month, **metrics))
            series.append(metrics['f1'])
        if len(series) >= 2:
            scores[family] = aut(series)
            logger.info(f'{family}: AUT {scores[family]:.4f} over {len(series)} months')
        else:
            scores[family] = None
            logger.warning(f'{family}: {len(series)} evaluated month(s), AUT undefined')
    return TimeResistanceResult(records, scores, missing)


# #########
# Reporting
# #########

@dataclass
class MetricSummary:
    model: str
    split: str
    n: int
    mean: Dict[str, float]
    std: Dict[str, float]


def summarize_metrics(records: Sequence[MetricsRecord]) -> List[MetricSummary]:
    """ Mean and sample standard deviation of every score per model and split, in first-seen order """
    groups: Dict[Tuple[str, str], List[MetricsRecord]] = OrderedDict()
    for record in records:
        groups.setdefault((record.model, record.split), []).append(record)
    summaries = []
    for (model, split), members in groups.items():
        mean: Dict[str, float] = {}
        std: Dict[str, float] = {}
        for name in SUMMARY_VALUES:
            values = np.array([member.value(name) for member in members])
            mean[name] = float(values.mean())
            std[name] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        summaries.append(MetricSummary(model, split, len(members), mean, std))
    return summaries


def write_metrics_csv(records: Sequence[MetricsRecord], path: Path) -> Path:
    """ One row per fold; the timing columns come last so they are easy to leave out of comparisons """
    return write_csv(path, METRIC_COLUMNS, ([getattr(r, name) for name in METRIC_COLUMNS] for r in records))


def write_summary_csv(summaries: Sequence[MetricSummary], path: Path) -> Path:
    header = ['model', 'split', 'n']
    for name in SUMMARY_VALUES:
        header += [f'{name}_mean', f'{name}_std']
    rows = []
    for s in summaries:
        row: List[Any] = [s.model, s.split, s.n]
        for name in SUMMARY_VALUES:
            row += [s.mean[name], s.std[name]]
        rows.append(row)
    return write_csv(path, header, rows)


def write_timing_csv(rows: Sequence[TimingRow], path: Path) -> Path:
    return write_csv(path, TimingRow.COLUMNS, (row.row() for row in rows))


def write_aut_csv(result: TimeResistanceResult, path: Path) -> Path:
    return write_csv(path, ['model', 'aut', 'missing_months'],
                     ([model, score, ' '.join(result.missing)] for model, score in result.aut.items()))


_INTEGER_FIELDS = {'run', 'fold', 'train_size', 'test_size'}


def read_metrics_csv(path: Path) -> List[MetricsRecord]:
    path = Path(path)
    records: List[MetricsRecord] = []
    with path.open(newline='') as fin:
        reader = csv.DictReader(fin)
        absent = [name for name in METRIC_COLUMNS if name not in (reader.fieldnames or [])]
        if absent:
            raise MetricsFormatError(f'{path} lacks the column(s) {", ".join(absent)}')
        for line, row in enumerate(reader, start=2):
            try:
                values: Dict[str, Any] = {
                    name: (int(row[name]) if name in _INTEGER_FIELDS else
                           row[name] if name in ('model', 'split') else float(row[name]))
                    for name in METRIC_COLUMNS
                }
            except (TypeError, ValueError) as e:
                raise MetricsFormatError(f'Can not parse line {line} of {path}: {e}')
            records.append(MetricsRecord(**values))
    if not records:
        raise EmptyInputError(f'{path} holds no metric rows')
    return records
