"""
Opcode-derived feature representations: histograms for the classifiers, and
RGB-image, frequency-image and bigram-token encodings exported for external models.
"""
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
from rich.progress import track

from phishscan.errors import EmptyInputError, OutputWriteError
from phishscan.logger import logger
from phishscan.opcodes import Bytecode, OpcodeTable, as_bytes, load_opcode_table, mnemonic_counts
from phishscan.schema import Corpus, FeatureMatrix, Instruction, normalize_hex
from phishscan.utils import format_float, parallel_map

IMAGE_SIDE = 224
IMAGE_CHANNELS = 3
IMAGE_CELLS = IMAGE_SIDE * IMAGE_SIDE * IMAGE_CHANNELS
IMAGE_PIXELS = IMAGE_SIDE * IMAGE_SIDE
BIGRAM_WIDTH = 6
PAD_ID = 0
OOV_ID = 1


# ##########
# Histograms
# ##########

@dataclass
class OpcodeHistogram:
    vocabulary: List[str]
    counts: np.ndarray


def build_histogram_vocab(training: Union[Corpus, Iterable[Mapping[str, int]]],
                          table: Optional[OpcodeTable] = None) -> List[str]:
    """ Sorted mnemonics seen in the training contracts """
    if isinstance(training, Corpus):
        table = table or load_opcode_table()
        per_contract: Iterable[Mapping[str, int]] = (mnemonic_counts(record.raw, table) for record in training)
    else:
        per_contract = training
    seen: Set[str] = set()
    n = 0
    for counts in per_contract:
        n += 1
        seen.update(m for m, c in counts.items() if c > 0)
    if n == 0:
        raise EmptyInputError('Can not build a vocabulary from an empty training set')
    return sorted(seen)


def _count_vector(counts: Mapping[str, int], vocabulary: Sequence[str]) -> np.ndarray:
    return np.array([counts.get(mnemonic, 0) for mnemonic in vocabulary], dtype=np.int64)


def histogram_featurize(instructions: Sequence[Instruction], vocabulary: Sequence[str]) -> OpcodeHistogram:
    """ Raw occurrence counts; mnemonics outside the vocabulary are dropped """
    counts = Counter(instruction.mnemonic for instruction in instructions)
    return OpcodeHistogram(list(vocabulary), _count_vector(counts, vocabulary))


class HistogramDataset:
    """
    Per-contract mnemonic counts of a corpus, disassembled once.

    Feature matrices for a split are built with a vocabulary taken from the
    training rows of that split only.
    """
    def __init__(self, counts: Sequence[Mapping[str, int]], labels: np.ndarray, ids: Sequence[str],
                 months: Sequence[str]):
        self.counts = list(counts)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.ids = list(ids)
        self.months = list(months)

    @classmethod
    def from_corpus(cls, corpus: Corpus, table: Optional[OpcodeTable] = None, workers: int = 1) -> 'HistogramDataset':
        table = table or load_opcode_table()
        if workers > 1:
            counts = parallel_map(lambda record: mnemonic_counts(record.raw, table), corpus.records, workers)
        else:
            counts = [
                mnemonic_counts(record.raw, table)
                for record in track(corpus.records, description='Disassembling', transient=True)
            ]
        return cls(counts, corpus.labels, [record.address for record in corpus], corpus.months)

    def __len__(self) -> int:
        return len(self.counts)

    def subset(self, rows: Sequence[int]) -> 'HistogramDataset':
        return HistogramDataset(
            [self.counts[i] for i in rows],
            self.labels[np.asarray(rows, dtype=np.int64)] if len(rows) else np.zeros(0, dtype=np.int64),
            [self.ids[i] for i in rows],
            [self.months[i] for i in rows],
        )

    def vocabulary(self, rows: Optional[Sequence[int]] = None) -> List[str]:
        rows = range(len(self)) if rows is None else rows
        return build_histogram_vocab([self.counts[i] for i in rows])

    def matrix(self, vocabulary: Sequence[str], rows: Optional[Sequence[int]] = None) -> FeatureMatrix:
        rows = list(range(len(self))) if rows is None else list(rows)
        X = np.zeros((len(rows), len(vocabulary)), dtype=np.float64)
        for r, i in enumerate(rows):
            X[r] = _count_vector(self.counts[i], vocabulary)
        y = self.labels[np.asarray(rows, dtype=np.int64)] if rows else np.zeros(0, dtype=np.int64)
        return FeatureMatrix(X, y, [self.ids[i] for i in rows], list(vocabulary))

    def matrices(self, train: Sequence[int], test: Sequence[int]) -> Tuple[FeatureMatrix, FeatureMatrix]:
        vocabulary = self.vocabulary(train)
        return self.matrix(vocabulary, train), self.matrix(vocabulary, test)


# ######
# Images
# ######

@dataclass
class ImageTensor:
    intensities: np.ndarray
    truncated: bool = False


def encode_rgb_image(bytecode: Bytecode) -> ImageTensor:
    """ Raw bytes fill the channels in row-major order: byte i lands in (i // 672, (i % 672) // 3, i % 3) """
    raw = as_bytes(bytecode)
    truncated = len(raw) > IMAGE_CELLS
    if truncated:
        logger.warning(f'Bytecode of {len(raw)} bytes truncated to {IMAGE_CELLS} for the RGB image')
        raw = raw[:IMAGE_CELLS]
    flat = np.zeros(IMAGE_CELLS, dtype=np.uint8)
    flat[:len(raw)] = np.frombuffer(raw, dtype=np.uint8)
    return ImageTensor(flat.reshape(IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS), truncated)


def _intensity_map(counts: Counter) -> Dict[Any, int]:
    if not counts:
        return {}
    # log scale from 0, not min-max: the rarest seen value stays above 0, which is kept for unseen values
    top = math.log1p(max(counts.values()))
    return {key: int(round(255 * math.log1p(count) / top)) for key, count in counts.items()}


class FrequencyLookup:
    """
    Intensities for the mnemonic, operand and gas fields, from their frequency in the training set.

    Each field maps log(1 + count) linearly onto 0-255, so the most frequent value
    gets 255. Unseen and absent values map to 0.
    """
    FIELDS = ('mnemonic', 'operand', 'gas')

    def __init__(self, mnemonic: Counter, operand: Counter, gas: Counter):
        self.counts = {'mnemonic': mnemonic, 'operand': operand, 'gas': gas}
        self._maps = {name: _intensity_map(counts) for name, counts in self.counts.items()}

    @classmethod
    def build(cls, training: Iterable[Sequence[Instruction]]) -> 'FrequencyLookup':
        mnemonic: Counter = Counter()
        operand: Counter = Counter()
        gas: Counter = Counter()
        for instructions in training:
            for instruction in instructions:
                mnemonic[instruction.mnemonic] += 1
                if instruction.operand is not None:
                    operand[instruction.operand_hex] += 1
                if instruction.gas is not None:
                    gas[instruction.gas] += 1
        return cls(mnemonic, operand, gas)

    def intensity(self, name: str, value) -> int:
        if value is None:
            return 0
        return self._maps[name].get(value, 0)

    def pixel(self, instruction: Instruction) -> Tuple[int, int, int]:
        return (
            self.intensity('mnemonic', instruction.mnemonic),
            self.intensity('operand', instruction.operand_hex if instruction.operand is not None else None),
            self.intensity('gas', instruction.gas),
        )


def build_frequency_lookup(training: Iterable[Sequence[Instruction]]) -> FrequencyLookup:
    return FrequencyLookup.build(training)


def encode_frequency_image(instructions: Sequence[Instruction], lookup: FrequencyLookup) -> ImageTensor:
    truncated = len(instructions) > IMAGE_PIXELS
    if truncated:
        logger.warning(f'Contract of {len(instructions)} instructions truncated to {IMAGE_PIXELS} pixels')
        instructions = instructions[:IMAGE_PIXELS]
    pixels = np.zeros((IMAGE_PIXELS, IMAGE_CHANNELS), dtype=np.uint8)
    for i, instruction in enumerate(instructions):
        pixels[i] = lookup.pixel(instruction)
    return ImageTensor(pixels.reshape(IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS), truncated)


# #######
# Bigrams
# #######

def bigram_windows(bytecode: Bytecode, stride: int = BIGRAM_WIDTH) -> List[str]:
    """ Windows of six hex characters, starting every `stride` characters, the last right-padded with '0' """
    if isinstance(bytecode, (bytes, bytearray)):
        text = bytes(bytecode).hex()
    else:
        text = normalize_hex(bytecode)[2:]
    return [text[i:i + BIGRAM_WIDTH].ljust(BIGRAM_WIDTH, '0') for i in range(0, len(text), stride)]


class BigramVocabulary:
    """ Bigram to id map: 0 pads, 1 is out-of-vocabulary, real bigrams from 2 in order of first occurrence """
    def __init__(self, ids: Optional[Dict[str, int]] = None, stride: int = BIGRAM_WIDTH):
        self.ids: Dict[str, int] = dict(ids) if ids else {}
        self.stride = stride

    @classmethod
    def build(cls, training: Iterable[Bytecode], stride: int = BIGRAM_WIDTH) -> 'BigramVocabulary':
        vocab = cls(stride=stride)
        for bytecode in training:
            for window in bigram_windows(bytecode, stride):
                if window not in vocab.ids:
                    vocab.ids[window] = len(vocab.ids) + 2
        return vocab

    def __len__(self) -> int:
        return len(self.ids) + 2

    def __contains__(self, window: str) -> bool:
        return window in self.ids

    def get(self, window: str, default: int = OOV_ID) -> int:
        return self.ids.get(window, default)

    def windows(self, ids: Iterable[int]) -> List[str]:
        inverse = {i: window for window, i in self.ids.items()}
        return [inverse[i] for i in ids if i in inverse]


def build_bigram_vocab(training: Iterable[Bytecode], stride: int = BIGRAM_WIDTH) -> BigramVocabulary:
    return BigramVocabulary.build(training, stride)


def tokenize_bigrams(bytecode: Bytecode, vocabulary: Union[BigramVocabulary, Mapping[str, int]],
                     stride: Optional[int] = None, oov_id: int = OOV_ID) -> List[int]:
    if stride is None:
        stride = vocabulary.stride if isinstance(vocabulary, BigramVocabulary) else BIGRAM_WIDTH
    return [vocabulary.get(window, oov_id) for window in bigram_windows(bytecode, stride)]


def pad_sequences(sequences: Sequence[Sequence[int]], pad_id: int = PAD_ID) -> np.ndarray:
    """ Right-pads every sequence to the longest in the batch """
    width = max((len(seq) for seq in sequences), default=0)
    out = np.full((len(sequences), width), pad_id, dtype=np.int32)
    for i, seq in enumerate(sequences):
        out[i, :len(seq)] = seq
    return out


# ######
# Export
# ######

@dataclass
class TensorBatch:
    """ A stack of image tensors or padded token sequences with row metadata """
    name: str
    array: np.ndarray
    ids: List[str]
    labels: List[int]
    meta: Dict[str, Any] = field(default_factory=dict)


ExportItem = Union[FeatureMatrix, TensorBatch]


def _write_histogram_csv(matrix: FeatureMatrix, path: Path) -> Dict[str, Any]:
    with path.open('w') as fout:
        fout.write(','.join(['id', 'label'] + list(matrix.columns)) + '\n')
        for i in range(matrix.n_rows):
            values = [str(int(v)) if float(v).is_integer() else format_float(float(v)) for v in matrix.X[i]]
            fout.write(','.join([matrix.ids[i], str(int(matrix.y[i]))] + values) + '\n')
    return {'path': path.name, 'kind': 'histogram', 'format': 'csv', 'rows': matrix.n_rows,
            'columns': len(matrix.columns)}


def _write_tensor(batch: TensorBatch, directory: Path) -> Dict[str, Any]:
    array = np.ascontiguousarray(batch.array)
    payload = directory / f'{batch.name}.bin'
    sidecar = directory / f'{batch.name}.json'
    dtype = array.dtype.newbyteorder('<') if array.dtype.itemsize > 1 else array.dtype
    array.astype(dtype, copy=False).tofile(payload)
    meta = {
        'shape': list(array.shape),
        'dtype': dtype.str,
        'order': 'C',
        'ids': batch.ids,
        'labels': batch.labels,
    }
    meta.update(batch.meta)
    with sidecar.open('w') as fout:
        json.dump(meta, fout, indent=1)
    return {'path': payload.name, 'sidecar': sidecar.name, 'kind': batch.name, 'format': 'bin',
            'rows': int(array.shape[0]) if array.ndim else 0, 'bytes': int(array.nbytes)}


def export_features(items: Sequence[ExportItem], destination: Path) -> Dict[str, Any]:
    """ Writes histograms as CSV and tensors as flat binary plus JSON sidecar; returns the manifest """
    destination = Path(destination)
    entries = []
    try:
        destination.mkdir(parents=True, exist_ok=True)
        for item in items:
            if isinstance(item, FeatureMatrix):
                entries.append(_write_histogram_csv(item, destination / 'histograms.csv'))
            else:
                entries.append(_write_tensor(item, destination))
        manifest = {'entries': entries}
        with (destination / 'manifest.json').open('w') as fout:
            json.dump(manifest, fout, indent=1)
    except OSError as e:
        raise OutputWriteError(f'Can not export features to {destination}: {e}')
    return manifest


def image_batch(name: str, tensors: Sequence[ImageTensor], ids: List[str], labels: List[int]) -> TensorBatch:
    if tensors:
        array = np.stack([tensor.intensities for tensor in tensors])
    else:
        array = np.zeros((0, IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS), dtype=np.uint8)
    truncated = [ids[i] for i, tensor in enumerate(tensors) if tensor.truncated]
    return TensorBatch(name, array, ids, labels, {'truncated': truncated})


def token_batch(sequences: Sequence[Sequence[int]], vocabulary: BigramVocabulary, ids: List[str],
                labels: List[int]) -> TensorBatch:
    return TensorBatch('bigrams', pad_sequences(sequences), ids, labels, {
        'pad_id': PAD_ID,
        'oov_id': OOV_ID,
        'vocabulary_size': len(vocabulary),
        'stride': vocabulary.stride,
        'vocabulary': vocabulary.ids,
    })
