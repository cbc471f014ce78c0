import json

import pytest

from phishscan.schema import ContractRecord, Corpus, Label

MONTHS = ['2023-10', '2023-11', '2023-12', '2024-01', '2024-02', '2024-03']


def address(i: int, label: Label) -> str:
    return '0x' + f'{int(label):02x}' + f'{i:038x}'


def phishing_bytecode(i: int) -> str:
    # CALLER / CALLVALUE heavy, ends in SELFDESTRUCT
    return '0x' + '6080604052' + '3334' * (3 + i % 4) + '60' + f'{i:02x}' + 'ff'


def benign_bytecode(i: int) -> str:
    # arithmetic and storage heavy
    return '0x' + '6080604052' + '600101' * (3 + i % 5) + '55' * (1 + i % 3) + '60' + f'{i:02x}' + '00'


def make_corpus(per_class: int = 12, months=MONTHS) -> Corpus:
    records = []
    for i in range(per_class):
        month = months[i % len(months)]
        records.append(ContractRecord(address(i, Label.PHISHING), phishing_bytecode(i), Label.PHISHING, month))
        records.append(ContractRecord(address(i, Label.BENIGN), benign_bytecode(i), Label.BENIGN, month))
    return Corpus(records)


def write_jsonl(path, corpus: Corpus):
    with open(path, 'w') as fout:
        for record in corpus:
            json.dump({
                'address': record.address,
                'bytecode': record.bytecode,
                'label': str(record.label),
                'deployed_month': record.deployed_month,
            }, fout)
            fout.write('\n')
    return path


@pytest.fixture
def corpus() -> Corpus:
    return make_corpus()


@pytest.fixture
def corpus_path(tmp_path, corpus):
    return write_jsonl(tmp_path / 'corpus.jsonl', corpus)
