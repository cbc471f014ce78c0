from concurrent.futures import ThreadPoolExecutor
from json import JSONDecodeError
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar
import csv
import hashlib
import json
import threading
import time

from phishscan.errors import OutputWriteError

T = TypeVar('T')
R = TypeVar('R')


class JsonFileCache:
    """ Json-L file-backed append-only key-value cache, safe for use from several threads """
    def __init__(self, path: Path, hit_func: Optional[Callable] = None):
        self.path = path
        self._data = self._read()
        self.hit_func = hit_func
        self._write_lock = threading.Lock()
        self._key_locks: Dict[str, threading.Lock] = {}

    def _read(self):
        result = dict()
        if self.path.exists():
            with self.path.open('r') as fin:
                i = 0
                try:
                    for i, line in enumerate(fin, start=1):
                        if not line.strip():
                            continue
                        lst = json.loads(line)
                        if len(lst) != 2:
                            raise ValueError(
                                f'Can not parse line {i} of {self.path}: saw {len(lst)} values, expecting 2.'
                            )
                        key, val = lst
                        result[key] = val
                except JSONDecodeError as e:
                    raise ValueError(f'Can not parse line {i} of {self.path}: {e}')
        return result

    def _write(self, key, val):
        with self._write_lock:
            self._data[key] = val
            with self.path.open('a') as fout:
                json.dump([key, val], fout)
                fout.write('\n')

    def _lock_for(self, key: str) -> threading.Lock:
        with self._write_lock:
            if key not in self._key_locks:
                self._key_locks[key] = threading.Lock()
            return self._key_locks[key]

    def __contains__(self, key) -> bool:
        return key in self._data

    def get(self, key, func):
        with self._lock_for(key):
            if key in self._data:
                if self.hit_func:
                    self.hit_func(key)
                return self._data[key]
            val = func(key)
            self._write(key, val)
            return val


class RateLimiter:
    """ Spaces calls at least 1 / rate seconds apart, across threads """
    def __init__(self, rate: float, clock: Callable[[], float] = time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate if rate and rate > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self):
        if self.interval <= 0:
            return
        with self._lock:
            now = self._clock()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            self._sleep(delay)


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """ Order-preserving map, on a thread pool when workers > 1 """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as fin:
        for block in iter(lambda: fin.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def format_float(value: Any) -> str:
    """ Exact, locale-independent rendering used in all CSV outputs """
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """ Writes rows with a fixed column order and exact float text """
    path = Path(path)
    try:
        with path.open('w', newline='') as fout:
            writer = csv.writer(fout, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_float(value) for value in row])
    except OSError as e:
        raise OutputWriteError(f'Can not write {path}: {e}')
    return path
