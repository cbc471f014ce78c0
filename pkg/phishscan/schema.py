import re
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from phishscan.errors import BytecodeDecodeError, FeatureWidthError, LabelError, TimeWindowError

RE_MONTH = re.compile(r'^([0-9]{4})-(0[1-9]|1[0-2])$')
RE_ADDRESS = re.compile(r'^0x[0-9a-fA-F]{40}$')
RE_HEX = re.compile(r'^[0-9a-fA-F]*$')


class Label(IntEnum):
    BENIGN = 0
    PHISHING = 1

    @classmethod
    def parse(cls, value) -> 'Label':
        if isinstance(value, Label):
            return value
        name = str(value).strip().lower()
        if name == 'phishing':
            return cls.PHISHING
        if name == 'benign':
            return cls.BENIGN
        raise LabelError(f'Unknown label "{value}": expecting phishing or benign')

    def __str__(self):
        return self.name.lower()


def normalize_hex(bytecode: str) -> str:
    """ Lower-case, 0x-prefixed form of an even-length hex string """
    text = bytecode.strip()
    if text[:2] in ('0x', '0X'):
        text = text[2:]
    if len(text) % 2 != 0:
        raise BytecodeDecodeError(f'Bytecode has odd length {len(text)}')
    if not RE_HEX.match(text):
        raise BytecodeDecodeError('Bytecode contains non-hex characters')
    return '0x' + text.lower()


def decode_hex(bytecode: str) -> bytes:
    return bytes.fromhex(normalize_hex(bytecode)[2:])


def check_month(month: str) -> str:
    if not RE_MONTH.match(month):
        raise ValueError(f'Month "{month}" is not of the form YYYY-MM')
    return month


def month_index(month: str) -> int:
    year, mon = check_month(month).split('-')
    return int(year) * 12 + int(mon) - 1


def month_from_index(index: int) -> str:
    return f'{index // 12:04d}-{index % 12 + 1:02d}'


def month_range(first: str, last: str) -> List[str]:
    """ Inclusive list of months from first to last """
    return [month_from_index(i) for i in range(month_index(first), month_index(last) + 1)]


@dataclass(frozen=True)
class OpcodeSpec:
    code: int
    mnemonic: str
    static_gas: Optional[int]
    push_width: int


@dataclass(frozen=True)
class Instruction:
    offset: int
    code: int
    mnemonic: str
    operand: Optional[bytes]
    gas: Optional[int]
    truncated: bool = False

    @property
    def size(self) -> int:
        return 1 + (len(self.operand) if self.operand is not None else 0)

    @property
    def operand_hex(self) -> str:
        if self.operand is None:
            return ''
        return '0x' + self.operand.hex()


@dataclass(frozen=True)
class ContractRecord:
    address: str
    bytecode: str
    label: Label
    deployed_month: str
    source: str = ''

    @property
    def raw(self) -> bytes:
        return bytes.fromhex(self.bytecode[2:])


class Corpus:
    """ Labeled bytecode records, immutable after construction """
    def __init__(self, records: Sequence[ContractRecord], dedup_index: Optional[Dict[str, ContractRecord]] = None):
        self.records: Tuple[ContractRecord, ...] = tuple(records)
        self.dedup_index: Dict[str, ContractRecord] = dict(dedup_index) if dedup_index else {}
        self.label_counts: Dict[Label, int] = {label: 0 for label in Label}
        self.label_counts.update(Counter(record.label for record in self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ContractRecord]:
        return iter(self.records)

    def __getitem__(self, i: int) -> ContractRecord:
        return self.records[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(record.label) for record in self.records], dtype=np.int64)

    @property
    def months(self) -> List[str]:
        return [record.deployed_month for record in self.records]

    def subset(self, indices: Sequence[int]) -> 'Corpus':
        return Corpus([self.records[i] for i in indices])

    def describe(self) -> str:
        return (f'{len(self)} records: {self.label_counts[Label.PHISHING]} phishing,'
                f' {self.label_counts[Label.BENIGN]} benign')


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    ids: List[str]
    columns: List[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            self.X = self.X.reshape(len(self.ids), len(self.columns))
        if self.X.shape != (len(self.ids), len(self.columns)):
            raise FeatureWidthError(
                f'Feature matrix of shape {self.X.shape} does not match {len(self.ids)} ids'
                f' and {len(self.columns)} columns'
            )
        if self.y.shape != (len(self.ids),):
            raise FeatureWidthError(f'{len(self.y)} labels for {len(self.ids)} rows')

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def width(self) -> int:
        return self.X.shape[1]


@dataclass
class MetricsRecord:
    model: str
    run: int
    fold: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    train_time_s: float = 0.0
    infer_time_s: float = 0.0
    train_size: int = 0
    test_size: int = 0
    split: str = ''

    METRICS = ('accuracy', 'precision', 'recall', 'f1')
    TIMING = ('train_time_s', 'infer_time_s')

    def value(self, metric: str) -> float:
        return float(getattr(self, metric))


@dataclass
class FoldPlan:
    k: int
    seed: int
    stratified: bool
    assignments: np.ndarray

    def splits(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """ Yields (train indices, test indices) for each fold """
        all_idx = np.arange(len(self.assignments))
        for fold in range(self.k):
            test_mask = self.assignments == fold
            yield all_idx[~test_mask], all_idx[test_mask]


@dataclass
class TimeWindowPlan:
    train_months: Tuple[str, str]
    test_months: List[str]

    def __post_init__(self):
        first, last = self.train_months
        try:
            start, end = month_index(first), month_index(last)
            tests = [month_index(month) for month in self.test_months]
        except ValueError as e:
            raise TimeWindowError(str(e))
        if start > end:
            raise TimeWindowError(f'Training range {first}..{last} is empty')
        if not tests:
            raise TimeWindowError('At least one test month is required')
        if min(tests) <= end:
            raise TimeWindowError(f'Test months must come strictly after the training range ending {last}')
        if len(set(tests)) != len(tests) or tests != sorted(tests):
            raise TimeWindowError('Test months must be ordered and distinct')

    def in_train(self, month: str) -> bool:
        return month_index(self.train_months[0]) <= month_index(month) <= month_index(self.train_months[1])


@dataclass
class RankSummary:
    group_sizes: List[int]
    rank_sums: List[float]
    mean_ranks: List[float]
    total: int
    tie_group_sizes: List[int]


@dataclass
class StatTestResult:
    method: str
    statistic: float
    p: Optional[float]
    p_adj: Optional[float] = None
    pair: Optional[Tuple[str, str]] = None
    metric: str = ''
    groups: str = ''
    note: str = ''


@dataclass
class AttributionReport:
    base_value: float
    shap_values: np.ndarray
    prediction: float
    sample_id: str = ''
    columns: List[str] = field(default_factory=list)
