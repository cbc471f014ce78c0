import numpy as np
import pytest

from phishscan.errors import BytecodeDecodeError, OpcodeTableError, OpcodeTableIntegrityError
from phishscan.opcodes import (
    disassemble,
    disassembly_rows,
    format_gas,
    load_opcode_table,
    mnemonic_counts,
    reconstruct,
    write_disassembly_csv,
)


@pytest.fixture
def table():
    return load_opcode_table()


def test_shanghai_table(table):
    assert len(table) == 144
    assert table.lookup(0x5F).mnemonic == 'PUSH0'
    assert table.lookup(0x5F).push_width == 0
    assert table.lookup(0x7F).push_width == 32
    assert table.lookup(0xFE).static_gas is None
    assert table.version == 'shanghai'
    assert len(table.digest) == 64


def test_undefined_codes_are_total(table):
    spec = table.lookup(0x0C)
    assert spec.mnemonic == 'UNKNOWN_0x0C'
    assert spec.static_gas is None
    assert not table.is_defined(0x0C)
    assert table.is_defined(0x00)


def test_disassemble_prologue(table):
    instructions = disassemble('0x6080604052', table)
    assert [ins.mnemonic for ins in instructions] == ['PUSH1', 'PUSH1', 'MSTORE']
    assert [ins.offset for ins in instructions] == [0, 2, 4]
    assert [ins.operand_hex for ins in instructions] == ['0x80', '0x40', '']
    assert [ins.gas for ins in instructions] == [3, 3, 3]


def test_prefix_optional(table):
    assert disassemble('6080604052', table) == disassemble('0x6080604052', table)


@pytest.mark.parametrize('bytecode,mnemonics', [
    ('0x', []),
    ('0x00', ['STOP']),
    ('0x5f00', ['PUSH0', 'STOP']),
    ('0xfe', ['INVALID']),
    ('0x0c', ['UNKNOWN_0x0C']),
])
def test_disassemble_mnemonics(table, bytecode, mnemonics):
    assert [ins.mnemonic for ins in disassemble(bytecode, table)] == mnemonics


def test_truncated_push(table):
    instructions = disassemble('0x61ff', table)
    assert len(instructions) == 1
    assert instructions[0].mnemonic == 'PUSH2'
    assert instructions[0].operand == b'\xff'
    assert instructions[0].truncated


def test_push_operand_is_not_decoded(table):
    # the 0x56 (JUMP) inside the operand must not become an instruction
    instructions = disassemble('0x605600', table)
    assert [ins.mnemonic for ins in instructions] == ['PUSH1', 'STOP']


def test_reconstruct(table):
    raw = bytes.fromhex('6080604052348015600f57600080fd5b')
    assert reconstruct(disassemble(raw, table)) == raw


@pytest.mark.parametrize('bytecode', ['0x123', '0xzz', 'hello'])
def test_bad_hex(table, bytecode):
    with pytest.raises(BytecodeDecodeError):
        disassemble(bytecode, table)


def test_mnemonic_counts(table):
    counts = mnemonic_counts('0x6080604052', table)
    assert counts == {'PUSH1': 2, 'MSTORE': 1}


def test_format_gas():
    assert format_gas(None) == 'NaN'
    assert format_gas(3) == '3'


def test_disassembly_rows(table):
    rows = list(disassembly_rows(disassemble('0x61ff', table)))
    assert rows == [['0', 'PUSH2', '0xff', '3', 'true']]


def test_write_disassembly_csv(table, tmp_path):
    path = tmp_path / 'out.csv'
    count = write_disassembly_csv(disassemble('0x6080604052', table), path)
    assert count == 3
    lines = path.read_text().splitlines()
    assert lines[0] == 'offset,mnemonic,operand,gas,truncated'
    assert lines[1] == '0,PUSH1,0x80,3,false'


def test_table_bad_header(tmp_path):
    path = tmp_path / 'opcodes_bad.csv'
    path.write_text('code,name\n0x00,STOP\n')
    with pytest.raises(OpcodeTableError):
        load_opcode_table(path)


def test_table_bad_push_width(tmp_path):
    path = tmp_path / 'opcodes_width.csv'
    path.write_text('code_hex,mnemonic,static_gas,push_width\n0x60,PUSH1,3,2\n')
    with pytest.raises(OpcodeTableError):
        load_opcode_table(path)


@pytest.mark.parametrize('rows', [
    '0x00,STOP,0,0\n0x00,HALT,0,0\n',
    '0x00,STOP,0,0\n0x01,STOP,0,0\n',
])
def test_table_duplicates(tmp_path, rows):
    path = tmp_path / 'opcodes_dup.csv'
    path.write_text('code_hex,mnemonic,static_gas,push_width\n' + rows)
    with pytest.raises(OpcodeTableIntegrityError):
        load_opcode_table(path)


def test_custom_table(tmp_path):
    path = tmp_path / 'opcodes_tiny.csv'
    path.write_text('code_hex,mnemonic,static_gas,push_width\n0x00,STOP,0,0\n0x60,PUSH1,,1\n')
    table = load_opcode_table(path)
    assert table.version == 'tiny'
    instructions = disassemble('0x600100', table)
    assert [ins.mnemonic for ins in instructions] == ['PUSH1', 'STOP']
    assert instructions[0].gas is None


def test_reconstruct_random_bytecode(table):
    rng = np.random.default_rng(17)
    for _ in range(500):
        raw = rng.integers(0, 256, int(rng.integers(0, 81))).astype(np.uint8).tobytes()
        instructions = disassemble(raw, table)
        assert reconstruct(instructions) == raw
        assert sum(ins.size for ins in instructions) == len(raw)
        assert all(a.offset + a.size == b.offset for a, b in zip(instructions, instructions[1:]))


@pytest.mark.parametrize('width', [1, 2, 16, 32])
def test_reconstruct_truncated_trailing_push(table, width):
    raw = bytes([0x60, 0x01, 0x5F + width]) + bytes(range(1, width))
    instructions = disassemble(raw, table)
    assert instructions[-1].truncated
    assert instructions[-1].size == width
    assert reconstruct(instructions) == raw
    assert sum(ins.size for ins in instructions) == len(raw)
