"""
JSON-RPC client for deployed bytecode (eth_getCode), with an on-disk cache,
rate limiting and exponential backoff.
"""
import itertools
import os
import time
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional

import requests

from phishscan.conf import RpcSettings
from phishscan.errors import AddressError, RpcRemoteError, RpcTransportError
from phishscan.logger import logger
from phishscan.schema import RE_ADDRESS, normalize_hex
from phishscan.utils import JsonFileCache, RateLimiter, parallel_map

EMPTY_CODE = '0x'
RETRY_STATUS = {429, 500, 502, 503, 504}


class CachedApi(ABC):
    def _init_cache(self, cache_dir: Optional[Path], name: str) -> JsonFileCache:
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)
        else:
            cache_dir = Path('/tmp')
        return JsonFileCache(
            Path(cache_dir) / f'{name}.jsonl',
            hit_func=self._cache_hit
        )

    def _cache_hit(self, key):
        logger.info(f'Using cached bytecode for "{key}"')

    @abstractmethod
    def _fetch(self, key: str) -> Any:
        pass


def check_address(address: str) -> str:
    address = address.strip()
    if not RE_ADDRESS.match(address):
        raise AddressError(f'Malformed address "{address}": expecting 0x followed by 40 hex digits')
    return address.lower()


class EthRpcClient(CachedApi):
    def __init__(
        self,
        settings: RpcSettings,
        cache_dir: Optional[Path] = None,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not settings.endpoint:
            raise RpcTransportError('No RPC endpoint configured: use --endpoint or set ETH_RPC_URL')
        self._settings = settings
        self._session = session or requests.Session()
        self._sleep = sleep
        self._limiter = RateLimiter(settings.rate_limit, sleep=sleep)
        self._ids = itertools.count(1)
        self._cache = self._init_cache(cache_dir, 'eth_getCode')
        self.requests_made = 0

    @property
    def endpoint(self) -> str:
        return str(self._settings.endpoint)

    def fetch_bytecode(self, address: str, block_tag: Optional[str] = None) -> str:
        """ Returns the deployed bytecode, "0x" for accounts without code """
        address = check_address(address)
        block_tag = block_tag or self._settings.block_tag
        code = self._cache.get(f'{address}@{block_tag}', self._fetch)
        if code == EMPTY_CODE:
            logger.warning(f'{address} has no code at {block_tag}: externally owned account?')
        return code

    def fetch_many(
        self,
        addresses: Iterable[str],
        block_tag: Optional[str] = None,
        workers: int = 1,
    ) -> Dict[str, str]:
        addresses = [check_address(address) for address in addresses]
        codes = parallel_map(lambda address: self.fetch_bytecode(address, block_tag), addresses, workers)
        return dict(zip(addresses, codes))

    def _fetch(self, key: str) -> str:
        address, block_tag = key.rsplit('@', 1)
        result = self._call('eth_getCode', [address, block_tag])
        if not isinstance(result, str):
            raise RpcRemoteError(f'eth_getCode for {address} returned {type(result).__name__}, expecting a hex string')
        return normalize_hex(result)

    def _call(self, method: str, params: list) -> Any:
        payload = {
            'jsonrpc': '2.0',
            'id': next(self._ids),
            'method': method,
            'params': params,
        }
        delay = self._settings.backoff_initial
        last_error = ''
        for attempt in range(1, self._settings.max_attempts + 1):
            self._limiter.wait()
            self.requests_made += 1
            try:
                resp = self._session.post(self.endpoint, json=payload, timeout=self._settings.timeout)
                if resp.status_code in RETRY_STATUS:
                    last_error = f'HTTP {resp.status_code}'
                else:
                    resp.raise_for_status()
                    return self._unwrap(resp.json())
            except (requests.Timeout, requests.ConnectionError) as e:
                last_error = f'{type(e).__name__}: {e}'
            except requests.HTTPError as e:
                raise RpcTransportError(f'{method} failed: {e}')
            except ValueError as e:
                # body was not JSON
                raise RpcTransportError(f'{method} returned a malformed response: {e}')
            if attempt < self._settings.max_attempts:
                logger.info(f'{method} attempt {attempt} failed ({last_error}), retrying in {delay:.2f}s')
                self._sleep(delay)
                delay *= 2
        raise RpcTransportError(f'{method} failed after {self._settings.max_attempts} attempts: {last_error}')

    @staticmethod
    def _unwrap(response: Dict[str, Any]) -> Any:
        if 'error' in response and response['error']:
            error = response['error']
            raise RpcRemoteError(str(error.get('message', error)), code=error.get('code'))
        if 'result' not in response:
            raise RpcRemoteError('JSON-RPC response has neither result nor error')
        return response['result']


def fetch_bytecode(address: str, endpoint: str, block_tag: str = 'latest', cache_dir: Optional[Path] = None) -> str:
    settings = RpcSettings(endpoint=endpoint, block_tag=block_tag)
    return EthRpcClient(settings, cache_dir=cache_dir).fetch_bytecode(address, block_tag)
