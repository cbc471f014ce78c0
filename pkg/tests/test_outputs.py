import json
from datetime import datetime

from phishscan.conf import Conf, RunConfig
from phishscan.opcodes import load_opcode_table
from phishscan.outputs import RunDirectory


def test_timestamped_name(tmp_path):
    run_dir = RunDirectory.create(tmp_path, 'evaluate', now=datetime(2024, 3, 1, 12, 30, 5))
    assert run_dir.path == tmp_path / '20240301-123005-evaluate'
    assert run_dir.path.is_dir()


def test_named_run_is_reused(tmp_path):
    first = RunDirectory.create(tmp_path, 'evaluate', 'baseline')
    first.write_text('marker.txt', 'x')
    second = RunDirectory.create(tmp_path, 'tune', 'baseline')
    assert (second / 'marker.txt').read_text() == 'x'


def test_records(tmp_path):
    conf = Conf()
    conf.rpc.endpoint = 'https://node.example.org/key'
    run_dir = RunDirectory.create(tmp_path, 'report', 'r')
    run_config = RunConfig.resolve('report', conf, run_dir.path)
    table = load_opcode_table()
    assert 'key' not in run_dir.write_config(run_config).read_text()
    provenance = json.loads(run_dir.write_provenance(run_config, table, '9.9', {'extra': 1}).read_text())
    assert provenance['phishscan_version'] == '9.9'
    assert provenance['opcode_table'] == {'version': table.version, 'sha256': table.digest}
    assert provenance['seeds'] == [0, 1, 2]
    assert provenance['extra'] == 1
    corpus = tmp_path / 'corpus.jsonl'
    corpus.write_bytes(b'abc')
    digest = run_dir.write_corpus_digest(corpus).read_text()
    assert digest == 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  corpus.jsonl\n'
