"""
Shanghai opcode table and linear-sweep disassembler for deployed EVM bytecode.
"""
import csv
import hashlib
import re
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from phishscan.errors import OpcodeTableError, OpcodeTableIntegrityError, OutputWriteError
from phishscan.schema import Instruction, OpcodeSpec, decode_hex

DATA_DIR = Path(__file__).parent / 'data'
DEFAULT_TABLE = DATA_DIR / 'opcodes_shanghai.csv'
TABLE_COLUMNS = ['code_hex', 'mnemonic', 'static_gas', 'push_width']
DISASSEMBLY_COLUMNS = ['offset', 'mnemonic', 'operand', 'gas', 'truncated']
ABSENT_GAS = 'NaN'
RE_MNEMONIC = re.compile(r'^[A-Z][A-Z0-9]*$')
RE_PUSH = re.compile(r'^PUSH([0-9]+)$')

Bytecode = Union[str, bytes]


def unknown_mnemonic(code: int) -> str:
    return f'UNKNOWN_0x{code:02X}'


class OpcodeTable:
    """ Immutable opcode table. Lookup by code is total over 0-255. """
    def __init__(self, specs: Sequence[OpcodeSpec], version: str = '', digest: str = ''):
        self.specs: Tuple[OpcodeSpec, ...] = tuple(sorted(specs, key=lambda spec: spec.code))
        self.version = version
        self.digest = digest
        self.by_mnemonic: Dict[str, OpcodeSpec] = {spec.mnemonic: spec for spec in self.specs}
        defined = {spec.code: spec for spec in self.specs}
        self._by_code: Tuple[OpcodeSpec, ...] = tuple(
            defined.get(code, OpcodeSpec(code, unknown_mnemonic(code), None, 0))
            for code in range(256)
        )
        self._widths: Tuple[int, ...] = tuple(spec.push_width for spec in self._by_code)

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self) -> Iterator[OpcodeSpec]:
        return iter(self.specs)

    def __getitem__(self, code: int) -> OpcodeSpec:
        return self.lookup(code)

    def lookup(self, code: int) -> OpcodeSpec:
        return self._by_code[code]

    def is_defined(self, code: int) -> bool:
        return not self._by_code[code].mnemonic.startswith('UNKNOWN_')


def _parse_gas(value: str, line: int, source: Path) -> Optional[int]:
    value = value.strip()
    if value in ('', ABSENT_GAS):
        return None
    try:
        gas = int(value)
    except ValueError:
        raise OpcodeTableError(f'Can not parse line {line} of {source}: static_gas "{value}" is not an integer')
    if gas < 0:
        raise OpcodeTableError(f'Can not parse line {line} of {source}: negative static_gas {gas}')
    return gas


def _parse_row(row: List[str], line: int, source: Path) -> OpcodeSpec:
    if len(row) != len(TABLE_COLUMNS):
        raise OpcodeTableError(
            f'Can not parse line {line} of {source}: saw {len(row)} values, expecting {len(TABLE_COLUMNS)}.'
        )
    code_hex, mnemonic, static_gas, push_width = (value.strip() for value in row)
    try:
        code = int(code_hex, 16)
        width = int(push_width)
    except ValueError as e:
        raise OpcodeTableError(f'Can not parse line {line} of {source}: {e}')
    if not 0 <= code <= 255:
        raise OpcodeTableError(f'Can not parse line {line} of {source}: code {code_hex} is not a byte')
    if not RE_MNEMONIC.match(mnemonic):
        raise OpcodeTableError(f'Can not parse line {line} of {source}: bad mnemonic "{mnemonic}"')
    m = RE_PUSH.match(mnemonic)
    expected_width = int(m.group(1)) if m else 0
    if width != expected_width or width > 32:
        raise OpcodeTableError(
            f'Can not parse line {line} of {source}: {mnemonic} has push_width {width}, expecting {expected_width}'
        )
    return OpcodeSpec(code, mnemonic, _parse_gas(static_gas, line, source), width)


def opcode_table_digest(source: Path = DEFAULT_TABLE) -> str:
    with open(source, 'rb') as fin:
        return hashlib.sha256(fin.read()).hexdigest()


@lru_cache(maxsize=8)
def load_opcode_table(source: Path = DEFAULT_TABLE) -> OpcodeTable:
    source = Path(source)
    specs: List[OpcodeSpec] = []
    seen_codes: Dict[int, int] = {}
    seen_mnemonics: Dict[str, int] = {}
    with open(source, newline='') as fin:
        reader = csv.reader(fin)
        header = next(reader, None)
        if header is None or [col.strip() for col in header] != TABLE_COLUMNS:
            raise OpcodeTableError(f'Can not parse line 1 of {source}: expecting header {",".join(TABLE_COLUMNS)}')
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            spec = _parse_row(row, line, source)
            if spec.code in seen_codes:
                raise OpcodeTableIntegrityError(
                    f'Duplicate code 0x{spec.code:02X} on line {line} of {source}'
                    f' (first on line {seen_codes[spec.code]})'
                )
            if spec.mnemonic in seen_mnemonics:
                raise OpcodeTableIntegrityError(
                    f'Duplicate mnemonic {spec.mnemonic} on line {line} of {source}'
                    f' (first on line {seen_mnemonics[spec.mnemonic]})'
                )
            seen_codes[spec.code] = line
            seen_mnemonics[spec.mnemonic] = line
            specs.append(spec)
    version = source.stem.replace('opcodes_', '')
    return OpcodeTable(specs, version=version, digest=opcode_table_digest(source))


def as_bytes(bytecode: Bytecode) -> bytes:
    if isinstance(bytecode, (bytes, bytearray)):
        return bytes(bytecode)
    return decode_hex(bytecode)


def sweep(raw: bytes, table: OpcodeTable) -> Iterator[Tuple[int, int, int]]:
    """ Yields (offset, code, operand end) for each instruction in a linear sweep """
    widths = table._widths
    i = 0
    n = len(raw)
    while i < n:
        code = raw[i]
        end = min(i + 1 + widths[code], n)
        yield i, code, end
        i = end


def disassemble(bytecode: Bytecode, table: Optional[OpcodeTable] = None) -> List[Instruction]:
    table = table or load_opcode_table()
    raw = as_bytes(bytecode)
    instructions = []
    for offset, code, end in sweep(raw, table):
        spec = table.lookup(code)
        if spec.push_width > 0:
            operand: Optional[bytes] = raw[offset + 1:end]
            truncated = end - offset - 1 < spec.push_width
        else:
            operand = None
            truncated = False
        instructions.append(Instruction(offset, code, spec.mnemonic, operand, spec.static_gas, truncated))
    return instructions


def reconstruct(instructions: Sequence[Instruction]) -> bytes:
    out = bytearray()
    for instruction in sorted(instructions, key=lambda ins: ins.offset):
        out.append(instruction.code)
        if instruction.operand:
            out.extend(instruction.operand)
    return bytes(out)


def mnemonic_counts(bytecode: Bytecode, table: Optional[OpcodeTable] = None) -> Counter:
    table = table or load_opcode_table()
    codes = Counter(code for _, code, _ in sweep(as_bytes(bytecode), table))
    return Counter({table.lookup(code).mnemonic: count for code, count in codes.items()})


def format_gas(gas: Optional[int]) -> str:
    return ABSENT_GAS if gas is None else str(gas)


def disassembly_rows(instructions: Sequence[Instruction]) -> Iterator[List[str]]:
    for instruction in instructions:
        yield [
            str(instruction.offset),
            instruction.mnemonic,
            instruction.operand_hex,
            format_gas(instruction.gas),
            'true' if instruction.truncated else 'false',
        ]


def write_disassembly_csv(instructions: Sequence[Instruction], destination: Path) -> int:
    try:
        with open(destination, 'w', newline='') as fout:
            writer = csv.writer(fout, lineterminator='\n')
            writer.writerow(DISASSEMBLY_COLUMNS)
            count = 0
            for row in disassembly_rows(instructions):
                writer.writerow(row)
                count += 1
    except OSError as e:
        raise OutputWriteError(f'Can not write disassembly to {destination}: {e}')
    return count
