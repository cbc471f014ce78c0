import pytest
import requests
from mock import MagicMock

from phishscan.conf import RpcSettings
from phishscan.errors import AddressError, RpcRemoteError, RpcTransportError
from phishscan.rpc import EthRpcClient, check_address

ADDRESS = '0x' + 'ab' * 20


def response(status=200, body=None):
    resp = MagicMock()
    resp.status_code = status
    resp.json.return_value = body
    if status >= 400:
        resp.raise_for_status.side_effect = requests.HTTPError(f'{status} error')
    return resp


def make_client(tmp_path, *responses, max_attempts=3):
    settings = RpcSettings(endpoint='http://localhost:8545', rate_limit=1000.0, max_attempts=max_attempts)
    session = MagicMock()
    session.post.side_effect = list(responses)
    sleep = MagicMock()
    client = EthRpcClient(settings, cache_dir=tmp_path, session=session, sleep=sleep)
    return client, session, sleep


def test_fetch_bytecode(tmp_path):
    client, session, _ = make_client(tmp_path, response(body={'jsonrpc': '2.0', 'id': 1, 'result': '0x6080'}))
    assert client.fetch_bytecode(ADDRESS) == '0x6080'
    payload = session.post.call_args.kwargs['json']
    assert payload['method'] == 'eth_getCode'
    assert payload['params'] == [ADDRESS, 'latest']


def test_cache_is_used(tmp_path):
    client, session, _ = make_client(tmp_path, response(body={'result': '0x6080'}))
    client.fetch_bytecode(ADDRESS, 'latest')
    assert client.fetch_bytecode(ADDRESS, 'latest') == '0x6080'
    assert session.post.call_count == 1
    # a fresh client reads the same cache file
    client, session, _ = make_client(tmp_path)
    assert client.fetch_bytecode(ADDRESS, 'latest') == '0x6080'
    assert session.post.call_count == 0


def test_block_tag_is_part_of_the_key(tmp_path):
    client, session, _ = make_client(
        tmp_path, response(body={'result': '0x00'}), response(body={'result': '0x01'}))
    assert client.fetch_bytecode(ADDRESS, 'latest') == '0x00'
    assert client.fetch_bytecode(ADDRESS, '0x10') == '0x01'
    assert session.post.call_count == 2


def test_empty_code(tmp_path):
    client, _, _ = make_client(tmp_path, response(body={'result': '0x'}))
    assert client.fetch_bytecode(ADDRESS) == '0x'


def test_retry_with_backoff(tmp_path):
    client, session, sleep = make_client(
        tmp_path,
        response(status=503),
        requests.ConnectionError('refused'),
        response(body={'result': '0x60'}),
    )
    assert client.fetch_bytecode(ADDRESS) == '0x60'
    assert session.post.call_count == 3
    # the rate limiter shares the sleep function with sub-millisecond waits
    assert [call.args[0] for call in sleep.call_args_list if call.args[0] >= 0.1] == [0.5, 1.0]


def test_gives_up(tmp_path):
    client, session, _ = make_client(tmp_path, response(status=429), response(status=429), max_attempts=2)
    with pytest.raises(RpcTransportError):
        client.fetch_bytecode(ADDRESS)
    assert session.post.call_count == 2


def test_remote_error(tmp_path):
    client, _, _ = make_client(tmp_path, response(body={'error': {'code': -32000, 'message': 'header not found'}}))
    with pytest.raises(RpcRemoteError) as excinfo:
        client.fetch_bytecode(ADDRESS)
    assert excinfo.value.code == -32000


def test_http_error_is_not_retried(tmp_path):
    client, session, _ = make_client(tmp_path, response(status=404))
    with pytest.raises(RpcTransportError):
        client.fetch_bytecode(ADDRESS)
    assert session.post.call_count == 1


def test_no_endpoint(tmp_path, monkeypatch):
    monkeypatch.delenv('ETH_RPC_URL', raising=False)
    with pytest.raises(RpcTransportError):
        EthRpcClient(RpcSettings(), cache_dir=tmp_path)


def test_endpoint_from_env(monkeypatch):
    monkeypatch.setenv('ETH_RPC_URL', 'http://node:8545')
    assert RpcSettings().endpoint == 'http://node:8545'


def test_fetch_many_preserves_order(tmp_path):
    other = '0x' + 'cd' * 20
    client, _, _ = make_client(tmp_path, response(body={'result': '0x01'}), response(body={'result': '0x02'}))
    assert client.fetch_many([ADDRESS, other]) == {ADDRESS: '0x01', other: '0x02'}


@pytest.mark.parametrize('address', ['0x1234', 'ab' * 20, '0x' + 'zz' * 20])
def test_bad_address(address):
    with pytest.raises(AddressError):
        check_address(address)


def test_address_is_lowercased():
    assert check_address('0x' + 'AB' * 20) == ADDRESS
