"""
Labeled corpus loading, exact-bytecode deduplication and corpus reports.
"""
import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple
from urllib.parse import urlsplit

import numpy as np
from pydantic import BaseModel, ValidationError, validator
from rich.progress import track

from phishscan.errors import CorpusFormatError, EmptyInputError, LabelError, OutputWriteError
from phishscan.logger import logger
from phishscan.opcodes import OpcodeTable, load_opcode_table, mnemonic_counts
from phishscan.rpc import EthRpcClient, check_address
from phishscan.schema import (
    ContractRecord,
    Corpus,
    Label,
    check_month,
    month_index,
    month_range,
    normalize_hex,
)
from phishscan.utils import format_float, sha256_hex

CORPUS_KEYS = ['address', 'bytecode', 'label', 'deployed_month', 'source']
HIST_BINS = 20


class LabelRow(BaseModel):
    address: str
    label: Label
    deployed_month: str
    source: str = ''

    @validator('address')
    def well_formed_address(value):
        return check_address(value)

    @validator('label', pre=True)
    def closed_label_set(value):
        return Label.parse(value)

    @validator('deployed_month')
    def month_format(value):
        return check_month(value.strip())


class CorpusRow(LabelRow):
    bytecode: str

    @validator('bytecode')
    def valid_hex(value):
        return normalize_hex(value)

    def record(self) -> ContractRecord:
        return ContractRecord(self.address, self.bytecode, self.label, self.deployed_month, self.source)


def _raise_row_error(e: ValidationError, line: int, path: Path):
    errors = e.errors()
    fields = {str(error['loc'][0]) for error in errors if error['loc']}
    message = '; '.join(f'{".".join(str(x) for x in error["loc"])}: {error["msg"]}' for error in errors)
    if fields == {'label'}:
        raise LabelError(f'Invalid label on line {line} of {path}: {message}')
    raise CorpusFormatError(f'Can not parse line {line} of {path}: {message}')


def _read_rows(path: Path) -> Iterator[Tuple[int, dict]]:
    """ Yields (line number, raw row) from a JSON-Lines or CSV file """
    if path.suffix.lower() == '.csv':
        with path.open(newline='') as fin:
            reader = csv.DictReader(fin)
            for line, row in enumerate(reader, start=2):
                if None in row:
                    raise CorpusFormatError(f'Can not parse line {line} of {path}: too many values')
                yield line, {key: val for key, val in row.items() if val is not None}
    else:
        with path.open() as fin:
            for line, text in enumerate(fin, start=1):
                if not text.strip():
                    continue
                try:
                    row = json.loads(text)
                except json.JSONDecodeError as e:
                    raise CorpusFormatError(f'Can not parse line {line} of {path}: {e}')
                if not isinstance(row, dict):
                    raise CorpusFormatError(f'Can not parse line {line} of {path}: expecting a JSON object')
                yield line, row


def load_corpus(records_path: Path) -> Corpus:
    records_path = Path(records_path)
    if not records_path.exists():
        raise CorpusFormatError(f'Corpus file {records_path} does not exist')
    records = []
    for line, row in _read_rows(records_path):
        try:
            records.append(CorpusRow(**row).record())
        except ValidationError as e:
            _raise_row_error(e, line, records_path)
    corpus = Corpus(records)
    logger.info(f'Loaded {records_path}: {corpus.describe()}')
    return corpus


def load_label_file(path: Path) -> List[LabelRow]:
    path = Path(path)
    rows = []
    for line, row in _read_rows(path):
        try:
            rows.append(LabelRow(**row))
        except ValidationError as e:
            _raise_row_error(e, line, path)
    return rows


def write_corpus(corpus: Corpus, destination: Path) -> int:
    try:
        with open(destination, 'w') as fout:
            for record in corpus:
                d = {
                    'address': record.address,
                    'bytecode': record.bytecode,
                    'label': str(record.label),
                    'deployed_month': record.deployed_month,
                    'source': record.source,
                }
                json.dump(d, fout)
                fout.write('\n')
    except OSError as e:
        raise OutputWriteError(f'Can not write corpus to {destination}: {e}')
    return len(corpus)


def fetch_labeled(
    label_rows: Sequence[LabelRow],
    client: EthRpcClient,
    block_tag: Optional[str] = None,
    workers: int = 1,
) -> Corpus:
    """ Builds a corpus by fetching the bytecode of every labeled address """
    codes = client.fetch_many([row.address for row in label_rows], block_tag=block_tag, workers=workers)
    tag = block_tag or client._settings.block_tag
    host = urlsplit(client.endpoint).hostname or 'rpc'
    records = [
        ContractRecord(row.address, codes[row.address], row.label, row.deployed_month,
                       row.source or f'eth_getCode:{host}@{tag}')
        for row in label_rows
    ]
    return Corpus(records)


# #############
# Deduplication
# #############

def bytecode_digest(record: ContractRecord) -> str:
    return sha256_hex(record.raw)


def dedup_exact(corpus: Corpus) -> Corpus:
    """ Keeps one record per bit-identical bytecode: earliest month, then lowest address """
    best: Dict[str, int] = {}
    for i, record in enumerate(corpus):
        digest = bytecode_digest(record)
        if digest not in best:
            best[digest] = i
            continue
        kept = corpus[best[digest]]
        if (month_index(record.deployed_month), record.address) < (month_index(kept.deployed_month), kept.address):
            best[digest] = i
    keep = sorted(best.values())
    removed = len(corpus) - len(keep)
    dedup_index = {digest: corpus[i] for digest, i in best.items()}
    result = Corpus([corpus[i] for i in keep], dedup_index)
    logger.info(f'Deduplication removed {removed} of {len(corpus)} records, kept {result.describe()}')
    return result


def match_temporal_distribution(corpus: Corpus, seed: int = 0) -> Corpus:
    """ Subsamples benign records so that each month holds as many benign as phishing records """
    by_month: Dict[str, Dict[Label, List[int]]] = defaultdict(lambda: {Label.PHISHING: [], Label.BENIGN: []})
    for i, record in enumerate(corpus):
        by_month[record.deployed_month][record.label].append(i)
    rng = np.random.default_rng(seed)
    keep: List[int] = []
    for month in sorted(by_month):
        phishing = by_month[month][Label.PHISHING]
        benign = by_month[month][Label.BENIGN]
        keep.extend(phishing)
        if len(benign) < len(phishing):
            logger.warning(f'{month}: only {len(benign)} benign records for {len(phishing)} phishing')
            keep.extend(benign)
        elif phishing:
            chosen = rng.choice(len(benign), size=len(phishing), replace=False)
            keep.extend(benign[j] for j in chosen)
    return corpus.subset(sorted(keep))


# ######
# Report
# ######

@dataclass
class CorpusReport:
    # rows of (month, phishing count, benign count)
    monthly: List[Tuple[str, int, int]]
    mnemonics: List[str]
    # per mnemonic: rows of (address, label, usage share)
    usage: Dict[str, List[Tuple[str, Label, float]]]


def monthly_counts(corpus: Corpus) -> List[Tuple[str, int, int]]:
    counts = Counter((record.deployed_month, record.label) for record in corpus)
    months = sorted({record.deployed_month for record in corpus}, key=month_index)
    return [
        (month, counts[(month, Label.PHISHING)], counts[(month, Label.BENIGN)])
        for month in month_range(months[0], months[-1])
    ]


def corpus_report(
    corpus: Corpus,
    mnemonics: Optional[Sequence[str]] = None,
    top_n: int = 20,
    table: Optional[OpcodeTable] = None,
) -> CorpusReport:
    if len(corpus) == 0:
        raise EmptyInputError('Can not report on an empty corpus')
    table = table or load_opcode_table()
    per_contract = [
        mnemonic_counts(record.raw, table)
        for record in track(corpus.records, description='Disassembling', transient=True)
    ]
    if mnemonics is None:
        totals: Counter = Counter()
        for counts in per_contract:
            totals.update(counts)
        mnemonics = [m for m, _ in sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]]
    usage: Dict[str, List[Tuple[str, Label, float]]] = {m: [] for m in mnemonics}
    for record, counts in zip(corpus, per_contract):
        total = sum(counts.values())
        for mnemonic in mnemonics:
            share = counts[mnemonic] / total if total else 0.0
            usage[mnemonic].append((record.address, record.label, share))
    return CorpusReport(monthly_counts(corpus), list(mnemonics), usage)


def usage_histogram(report: CorpusReport, bins: int = HIST_BINS) -> List[Tuple[str, str, float, float, int]]:
    """ Per mnemonic and class, counts of contracts in equal-width usage-share bins """
    rows = []
    for mnemonic in report.mnemonics:
        shares = np.array([share for _, _, share in report.usage[mnemonic]])
        labels = np.array([int(label) for _, label, _ in report.usage[mnemonic]])
        upper = float(shares.max()) if len(shares) and shares.max() > 0 else 1.0
        edges = np.linspace(0.0, upper, bins + 1)
        for label in (Label.PHISHING, Label.BENIGN):
            counts, _ = np.histogram(shares[labels == int(label)], bins=edges)
            for low, high, count in zip(edges[:-1], edges[1:], counts):
                rows.append((mnemonic, str(label), float(low), float(high), int(count)))
    return rows


def write_report(report: CorpusReport, directory: Path) -> List[Path]:
    directory = Path(directory)
    paths = [directory / 'monthly_counts.csv', directory / 'opcode_usage.csv', directory / 'opcode_usage_hist.csv']
    try:
        with paths[0].open('w', newline='') as fout:
            writer = csv.writer(fout, lineterminator='\n')
            writer.writerow(['month', 'phishing', 'benign', 'total'])
            for month, phishing, benign in report.monthly:
                writer.writerow([month, phishing, benign, phishing + benign])
        with paths[1].open('w', newline='') as fout:
            writer = csv.writer(fout, lineterminator='\n')
            writer.writerow(['mnemonic', 'label', 'address', 'share'])
            for mnemonic in report.mnemonics:
                for address, label, share in report.usage[mnemonic]:
                    writer.writerow([mnemonic, str(label), address, format_float(share)])
        with paths[2].open('w', newline='') as fout:
            writer = csv.writer(fout, lineterminator='\n')
            writer.writerow(['mnemonic', 'label', 'bin_low', 'bin_high', 'count'])
            for mnemonic, label, low, high, count in usage_histogram(report):
                writer.writerow([mnemonic, label, format_float(low), format_float(high), count])
    except OSError as e:
        raise OutputWriteError(f'Can not write corpus report to {directory}: {e}')
    return paths
