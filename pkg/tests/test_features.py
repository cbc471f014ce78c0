import json
from dataclasses import replace

import numpy as np
import pytest

from phishscan.errors import EmptyInputError, FeatureWidthError
from phishscan.features import (
    IMAGE_CELLS,
    OOV_ID,
    HistogramDataset,
    bigram_windows,
    build_bigram_vocab,
    build_frequency_lookup,
    build_histogram_vocab,
    encode_frequency_image,
    encode_rgb_image,
    export_features,
    histogram_featurize,
    image_batch,
    pad_sequences,
    token_batch,
    tokenize_bigrams,
)
from phishscan.evaluation import make_folds
from phishscan.models import train
from phishscan.opcodes import disassemble
from phishscan.schema import Corpus, FeatureMatrix


def test_histogram_featurize():
    histogram = histogram_featurize(disassemble('0x6080604052'), ['MSTORE', 'PUSH1', 'STOP'])
    assert histogram.counts.tolist() == [1, 2, 0]


def test_histogram_drops_out_of_vocabulary():
    histogram = histogram_featurize(disassemble('0x600100'), ['PUSH1'])
    assert histogram.counts.tolist() == [1]


def test_histogram_vocab_is_sorted(corpus):
    vocabulary = build_histogram_vocab(corpus)
    assert vocabulary == sorted(vocabulary)
    assert {'PUSH1', 'MSTORE', 'CALLER', 'SELFDESTRUCT', 'SSTORE'} <= set(vocabulary)


def test_empty_vocab():
    with pytest.raises(EmptyInputError):
        build_histogram_vocab([])


def test_dataset_vocabulary_from_training_rows_only(corpus):
    dataset = HistogramDataset.from_corpus(corpus)
    phishing_rows = [i for i, label in enumerate(dataset.labels) if label == 1]
    benign_rows = [i for i, label in enumerate(dataset.labels) if label == 0]
    train, test = dataset.matrices(phishing_rows, benign_rows)
    assert 'SSTORE' not in train.columns
    assert test.columns == train.columns
    assert test.n_rows == len(benign_rows)
    assert train.X.sum(axis=1).min() > 0


@pytest.mark.parametrize('workers', [1, 3])
def test_dataset_matrix(corpus, workers):
    dataset = HistogramDataset.from_corpus(corpus, workers=workers)
    matrix = dataset.matrix(['CALLER', 'SELFDESTRUCT'])
    assert matrix.width == 2
    assert matrix.ids == [record.address for record in corpus]
    assert matrix.y.tolist() == corpus.labels.tolist()
    assert (matrix.X[matrix.y == 0] == 0).all()
    assert (matrix.X[matrix.y == 1, 1] == 1).all()


def test_dataset_subset(corpus):
    dataset = HistogramDataset.from_corpus(corpus)
    subset = dataset.subset([3, 1])
    assert subset.ids == [dataset.ids[3], dataset.ids[1]]
    assert subset.labels.tolist() == [dataset.labels[3], dataset.labels[1]]
    assert len(dataset.subset([])) == 0


def test_feature_matrix_shape_is_checked():
    with pytest.raises(FeatureWidthError):
        FeatureMatrix(np.zeros((2, 3)), np.zeros(2), ['a', 'b'], ['x', 'y'])


def test_rgb_image_layout():
    image = encode_rgb_image('0x010203040506')
    assert image.intensities.shape == (224, 224, 3)
    assert image.intensities.dtype == np.uint8
    assert image.intensities[0, 0].tolist() == [1, 2, 3]
    assert image.intensities[0, 1].tolist() == [4, 5, 6]
    assert image.intensities[0, 2].tolist() == [0, 0, 0]
    assert not image.truncated


def test_rgb_image_row_wrap():
    raw = bytes(673)
    raw = raw[:672] + b'\x07'
    image = encode_rgb_image(raw)
    assert image.intensities[1, 0, 0] == 7


def test_rgb_image_truncates():
    image = encode_rgb_image(b'\x01' * (IMAGE_CELLS + 10))
    assert image.truncated
    assert (image.intensities == 1).all()


def test_frequency_image():
    training = [disassemble('0x6080604052'), disassemble('0x600100')]
    lookup = build_frequency_lookup(training)
    # PUSH1 is the most frequent mnemonic, gas 3 the most frequent gas
    assert lookup.intensity('mnemonic', 'PUSH1') == 255
    assert lookup.intensity('gas', 3) == 255
    assert lookup.intensity('mnemonic', 'SELFDESTRUCT') == 0
    image = encode_frequency_image(disassemble('0x6080ff'), lookup)
    assert image.intensities[0, 0].tolist() == [255, lookup.intensity('operand', '0x80'), 255]
    assert image.intensities[0, 1].tolist() == [0, 0, 0]
    assert image.intensities[0, 2].tolist() == [0, 0, 0]


def test_frequency_intensity_is_log_scaled():
    training = [disassemble('0x' + '01' * 7 + '00')]
    lookup = build_frequency_lookup(training)
    assert lookup.intensity('mnemonic', 'ADD') == 255
    assert lookup.intensity('mnemonic', 'STOP') == round(255 * np.log(2) / np.log(8))


@pytest.mark.parametrize('bytecode,stride,windows', [
    ('0x6080604052', 6, ['608060', '405200']),
    ('0x608060', 6, ['608060']),
    ('0x60806040', 4, ['608060', '604000']),
    ('0x', 6, []),
])
def test_bigram_windows(bytecode, stride, windows):
    assert bigram_windows(bytecode, stride) == windows


def test_bigram_vocab_and_tokens():
    vocabulary = build_bigram_vocab(['0x6080604052', '0x608060aabbcc'])
    assert vocabulary.ids == {'608060': 2, '405200': 3, 'aabbcc': 4}
    assert len(vocabulary) == 5
    assert tokenize_bigrams('0x608060ddeeff', vocabulary) == [2, OOV_ID]
    assert vocabulary.windows([2, 4, 1]) == ['608060', 'aabbcc']


def test_pad_sequences():
    padded = pad_sequences([[2, 3, 4], [5]])
    assert padded.tolist() == [[2, 3, 4], [5, 0, 0]]
    assert pad_sequences([]).shape == (0, 0)


def test_export_features(tmp_path, corpus):
    dataset = HistogramDataset.from_corpus(corpus)
    ids = dataset.ids
    labels = dataset.labels.tolist()
    vocabulary = build_bigram_vocab([record.bytecode for record in corpus])
    items = [
        dataset.matrix(dataset.vocabulary()),
        image_batch('rgb', [encode_rgb_image(record.raw) for record in corpus], ids, labels),
        token_batch([tokenize_bigrams(record.bytecode, vocabulary) for record in corpus], vocabulary, ids, labels),
    ]
    manifest = export_features(items, tmp_path / 'features')
    assert [entry['kind'] for entry in manifest['entries']] == ['histogram', 'rgb', 'bigrams']
    rgb = np.fromfile(tmp_path / 'features' / 'rgb.bin', dtype=np.uint8).reshape(len(corpus), 224, 224, 3)
    assert rgb[0, 0, 0].tolist() == [0x60, 0x80, 0x60]
    meta = json.loads((tmp_path / 'features' / 'bigrams.json').read_text())
    assert meta['pad_id'] == 0
    assert meta['oov_id'] == 1
    assert meta['shape'][0] == len(corpus)
    header = (tmp_path / 'features' / 'histograms.csv').read_text().splitlines()[0]
    assert header.startswith('id,label,')


@pytest.mark.parametrize('family,params', [
    ('rf', {'n_trees': 5, 'max_depth': 3}),
    ('gbdt', {'n_trees': 5, 'max_depth': 2}),
    ('knn', {'k': 3}),
])
def test_test_fold_rows_do_not_reach_training(corpus, family, params):
    train_idx, test_idx = next(make_folds(corpus.labels, 3, seed=2).splits())
    # CREATE / CALL / CALLCODE never occur in the fixture corpus
    mutated = Corpus([
        replace(record, bytecode='0x' + 'f0f1f2' * (3 + i)) if i in set(test_idx.tolist()) else record
        for i, record in enumerate(corpus)
    ])

    def fit(contracts):
        train_split, test_split = HistogramDataset.from_corpus(contracts).matrices(train_idx, test_idx)
        return train(family, train_split, params, seed=9), test_split

    model, test_split = fit(corpus)
    again, mutated_test = fit(mutated)
    assert again.vocabulary == model.vocabulary
    assert 'CREATE' not in again.vocabulary
    assert json.dumps(again.estimator.to_dict()) == json.dumps(model.estimator.to_dict())
    assert not np.array_equal(mutated_test.X, test_split.X)
