"""
Run directories: one per invocation, holding the resolved configuration,
provenance and every artifact the subcommand writes.
"""
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from phishscan.conf import RunConfig
from phishscan.errors import OutputWriteError
from phishscan.logger import logger
from phishscan.opcodes import OpcodeTable
from phishscan.utils import file_digest

TIMESTAMP_FORMAT = '%Y%m%d-%H%M%S'


class RunDirectory:
    def __init__(self, path: Path):
        self.path = Path(path)

    @classmethod
    def create(cls, base: Path, subcommand: str, run_name: Optional[str] = None,
               now: Optional[datetime] = None) -> 'RunDirectory':
        """ <base>/<run_name>, or <base>/<timestamp>-<subcommand> when no name is given """
        if run_name:
            name = run_name
        else:
            name = f'{(now or datetime.now()).strftime(TIMESTAMP_FORMAT)}-{subcommand}'
        path = Path(base) / name
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputWriteError(f'Can not create run directory {path}: {e}')
        logger.info(f'Writing outputs to {path}')
        return cls(path)

    def __truediv__(self, name: str) -> Path:
        return self.path / name

    def write_text(self, name: str, text: str) -> Path:
        path = self.path / name
        try:
            path.write_text(text)
        except OSError as e:
            raise OutputWriteError(f'Can not write {path}: {e}')
        return path

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, json.dumps(data, indent=1, sort_keys=True) + '\n')

    def write_config(self, run_config: RunConfig) -> Path:
        return self.write_text('config.yml', run_config.snapshot())

    def write_provenance(self, run_config: RunConfig, table: OpcodeTable, version: str,
                         extra: Optional[Dict[str, Any]] = None) -> Path:
        provenance = {
            'phishscan_version': version,
            'opcode_table': {'version': table.version, 'sha256': table.digest},
            'seeds': run_config.seeds,
            'workers': run_config.workers,
            'subcommand': run_config.subcommand,
        }
        provenance.update(extra or {})
        return self.write_json('provenance.json', provenance)

    def write_digest(self, source: Path, name: str) -> Path:
        """ sha256sum-style digest of an input file, written as <name>.sha256 """
        source = Path(source)
        return self.write_text(f'{name}.sha256', f'{file_digest(source)}  {source.name}\n')

    def write_corpus_digest(self, corpus_path: Path) -> Path:
        return self.write_digest(corpus_path, 'corpus')
