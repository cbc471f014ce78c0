import threading

import pytest
from mock import MagicMock

from phishscan.errors import OutputWriteError
from phishscan.utils import JsonFileCache, RateLimiter, file_digest, format_float, parallel_map, sha256_hex, write_csv


def test_cache_persists(tmp_path):
    path = tmp_path / 'cache.jsonl'
    func = MagicMock(return_value={'result': '0x00'})
    hits = MagicMock()
    cache = JsonFileCache(path, hit_func=hits)
    assert cache.get('a', func) == {'result': '0x00'}
    assert cache.get('a', func) == {'result': '0x00'}
    func.assert_called_once_with('a')
    hits.assert_called_once_with('a')
    reopened = JsonFileCache(path)
    assert 'a' in reopened
    assert reopened.get('a', MagicMock()) == {'result': '0x00'}


def test_cache_rejects_broken_lines(tmp_path):
    path = tmp_path / 'cache.jsonl'
    path.write_text('["a", 1, 2]\n')
    with pytest.raises(ValueError):
        JsonFileCache(path)
    path.write_text('["a", 1]\n{not json\n')
    with pytest.raises(ValueError):
        JsonFileCache(path)


def test_cache_computes_each_key_once_across_threads(tmp_path):
    calls = []
    lock = threading.Lock()

    def slow(key):
        with lock:
            calls.append(key)
        return key.upper()

    cache = JsonFileCache(tmp_path / 'cache.jsonl')
    assert parallel_map(lambda key: cache.get(key, slow), ['x', 'y', 'x', 'x', 'y'], workers=4) == \
        ['X', 'Y', 'X', 'X', 'Y']
    assert sorted(calls) == ['x', 'y']


def test_rate_limiter_spaces_calls():
    clock = MagicMock(return_value=10.0)
    sleep = MagicMock()
    limiter = RateLimiter(4.0, clock=clock, sleep=sleep)
    limiter.wait()
    sleep.assert_not_called()
    limiter.wait()
    sleep.assert_called_once_with(pytest.approx(0.25))
    limiter.wait()
    assert sleep.call_args[0][0] == pytest.approx(0.5)


def test_rate_limiter_disabled():
    sleep = MagicMock()
    limiter = RateLimiter(0, sleep=sleep)
    limiter.wait()
    limiter.wait()
    sleep.assert_not_called()


@pytest.mark.parametrize('workers', [1, 3])
def test_parallel_map_keeps_order(workers):
    assert parallel_map(lambda x: x * x, range(10), workers) == [x * x for x in range(10)]


def test_digests(tmp_path):
    path = tmp_path / 'data.bin'
    path.write_bytes(b'abc')
    expected = 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'
    assert sha256_hex(b'abc') == expected
    assert file_digest(path) == expected


@pytest.mark.parametrize('value,text', [(None, ''), (0.1, '0.1'), (1 / 3, '0.3333333333333333'), (3, '3'),
                                        ('1/3', '1/3'), (True, 'True')])
def test_format_float(value, text):
    assert format_float(value) == text


def test_write_csv(tmp_path):
    path = write_csv(tmp_path / 'out.csv', ['a', 'b'], [[1, 0.5], ['x,y', None]])
    assert path.read_text() == 'a,b\n1,0.5\n"x,y",\n'
    with pytest.raises(OutputWriteError):
        write_csv(tmp_path / 'missing' / 'out.csv', ['a'], [])
