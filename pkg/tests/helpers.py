"""Small constructors shared by the engine tests."""

from pofvm.isa import FieldRef, Imm, InstructionBlock, Program, Space
from pofvm.tables import FlowEntry, MatchType, MissPolicy, TableSchema

PKT, META, PARAM = Space.PACKET, Space.METADATA, Space.PARAMETER


def F(space, off, length):
    return FieldRef(space, off, length)


def I(value, width=64):
    return Imm(value, width)


def block(bid, *instrs):
    return InstructionBlock(bid, tuple(instrs))


def program(*blocks, schemas=(), entries=(), start=None):
    return Program(tuple(schemas), tuple(blocks), tuple(entries), blocks[0].block_id if start is None else start)


def exact(tid, width, miss=MissPolicy.drop(), size=1024):
    return TableSchema(tid, MatchType.EXACT, width, size, miss)


def entry(value, width, block_id, params=b"", mask=None, prio=0):
    return FlowEntry(value, (1 << width) - 1 if mask is None else mask, block_id, prio, params)
