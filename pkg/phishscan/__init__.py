#!/usr/bin/env python
"""
phishscan - Detect phishing smart contracts from deployed EVM bytecode
"""
__version__ = '0.1.0'
__author__ = 'phishscan contributors'

from phishscan.phishscan import cli, main, run  # noqa: E402
from phishscan.opcodes import disassemble, load_opcode_table  # noqa: E402
from phishscan.corpus import load_corpus  # noqa: E402
from phishscan.features import HistogramDataset  # noqa: E402
from phishscan.models import train, predict  # noqa: E402
from phishscan.schema import Corpus, ContractRecord, Label  # noqa: E402

__all__ = ['disassemble', 'load_opcode_table', 'load_corpus', 'HistogramDataset',
           'train', 'predict', 'Corpus', 'ContractRecord', 'Label', 'cli', 'main', 'run']
