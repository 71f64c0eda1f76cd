"""Interpreter mode: execute generic flow instructions one by one.

Each instruction is charged from a calibration table that stands in for the
hand-written NPU microcode routine implementing it. Table instructions pay
a fixed setup plus a per-field cost for the key-construction loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .errors import PofError
from .isa import (
    AddField, Branch, Calc, Checksum, DelField, Drop, EntryMod, FieldRef, GotoTable, IncPool, Instruction,
    InstructionBlock, Jump, Output, PacketIn, ReadPool, SearchTable, SetField, TableMod, WritePool,
)
from . import bits
from .machine import MISS_REASON, Fault, Frame, Verdict, VerdictKind, alu, compare, miss_action
from .perf import CostReport
from .tables import MissKind

TraceSink = Callable[[int, int, str, CostReport], None]


@dataclass(frozen=True)
class InterpCosts:
    """Per-kind (micro-instructions, thread switches) charged by the interpreter.

    Only the table-access pair is measured; the rest are estimates.
    """

    table_base: tuple[int, int] = (37, 7)
    table_per_field: tuple[int, int] = (33, 3)
    set_field: tuple[int, int] = (18, 0)
    calc: tuple[int, int] = (14, 0)
    add_del: tuple[int, int] = (24, 0)
    pool: tuple[int, int] = (16, 1)
    checksum_base: tuple[int, int] = (22, 1)
    checksum_per_word: int = 2
    branch: tuple[int, int] = (6, 0)
    terminal: tuple[int, int] = (9, 1)
    control: tuple[int, int] = (40, 2)


DEFAULT_COSTS = InterpCosts()


def interp_cost(ins: Instruction, costs: InterpCosts = DEFAULT_COSTS) -> CostReport:
    if isinstance(ins, (GotoTable, SearchTable)):
        n = len(ins.key_fields)
        return CostReport(costs.table_base[0] + costs.table_per_field[0] * n,
                          costs.table_base[1] + costs.table_per_field[1] * n)
    if isinstance(ins, Checksum):
        words = (ins.region_length // 8 + 1) // 2
        return CostReport(costs.checksum_base[0] + costs.checksum_per_word * words, costs.checksum_base[1])
    if isinstance(ins, SetField):
        pair = costs.set_field
    elif isinstance(ins, Calc):
        pair = costs.calc
    elif isinstance(ins, (AddField, DelField)):
        pair = costs.add_del
    elif isinstance(ins, (ReadPool, WritePool, IncPool)):
        pair = costs.pool
    elif isinstance(ins, (Branch, Jump)):
        pair = costs.branch
    elif isinstance(ins, (Output, Drop, PacketIn)):
        pair = costs.terminal
    else:
        pair = costs.control
    return CostReport(*pair)


def build_key(key_fields, frame: Frame) -> tuple[int, int]:
    """Concatenate field values in order; returns ``(key, width_bits)``."""
    if not key_fields:
        raise PofError("EMPTY_KEY", "key needs at least one field")
    key = width = 0
    for f in key_fields:
        key = (key << f.length) | frame.read(f)
        width += f.length
    return key, width


def params_slice(frame: Frame, params: bytes, dst: FieldRef) -> int:
    padded = params.ljust(frame.sizes.params, b"\x00")
    return bits.get_field(padded, 0, dst.length)


class Interpreter:
    """Runs blocks directly. ``blocks`` is consulted live, so block swaps take effect at once."""

    def __init__(self, blocks: Mapping[int, InstructionBlock], costs: InterpCosts = DEFAULT_COSTS,
                 trace: TraceSink | None = None) -> None:
        self.blocks = blocks
        self.costs = costs
        self.trace = trace

    def _block(self, block_id: int) -> InstructionBlock:
        try:
            return self.blocks[block_id]
        except KeyError:
            raise Fault("UNKNOWN_BLOCK", f"block {block_id} not installed") from None

    def run(self, frame: Frame, start_block: int) -> Verdict:
        cost = CostReport()
        try:
            block = self._block(start_block)
            pc = 0
            while True:
                if pc >= len(block.instructions):
                    raise Fault("FELL_OFF_BLOCK", f"block {block.block_id} ended without a terminal")
                ins = block.instructions[pc]
                delta = interp_cost(ins, self.costs)
                cost = cost + delta
                if self.trace is not None:
                    self.trace(block.block_id, pc, type(ins).__name__, delta)
                result = self.step(frame, ins, pc)
                if isinstance(result, tuple):
                    kind, value = result
                    if kind == "block":
                        block, pc = self._block(value), 0
                        continue
                    return frame.verdict(kind, value, cost)
                pc = result
        except PofError as exc:
            return frame.verdict(VerdictKind.DROP, 0, cost, exc.code)

    def step(self, frame: Frame, ins: Instruction, pc: int):
        """Execute one instruction: returns the next pc, ``("block", id)``, or ``(VerdictKind, value)``."""
        if isinstance(ins, SetField):
            frame.write(ins.dst, frame.operand(ins.src))
        elif isinstance(ins, Calc):
            frame.write(ins.dst, alu(ins.op, frame.operand(ins.a), frame.operand(ins.b)))
        elif isinstance(ins, AddField):
            bits.insert_bits(frame.packet, ins.offset, ins.length, frame.operand(ins.src))
        elif isinstance(ins, DelField):
            bits.delete_bits(frame.packet, ins.offset, ins.length)
        elif isinstance(ins, ReadPool):
            frame.write(ins.dst, bits.get_field(frame.pool, ins.pool_offset, ins.length))
        elif isinstance(ins, WritePool):
            bits.set_field(frame.pool, ins.pool_offset, ins.length, frame.operand(ins.src))
        elif isinstance(ins, IncPool):
            cur = bits.get_field(frame.pool, ins.pool_offset, ins.length)
            bits.set_field(frame.pool, ins.pool_offset, ins.length, (cur + ins.delta) & ((1 << ins.length) - 1))
        elif isinstance(ins, Checksum):
            frame.write(ins.dst, frame.checksum(ins.dst, ins.region_offset, ins.region_length))
        elif isinstance(ins, GotoTable):
            key, width = build_key(ins.key_fields, frame)
            entry = frame.tables.lookup(ins.table_id, key, width)
            if entry is not None:
                frame.hop()
                frame.bind_params(entry.params)
                return ("block", entry.block_id)
            kind, block_id = miss_action(frame.tables, ins.table_id)
            if kind is MissKind.DROP:
                return (VerdictKind.DROP, 0)
            if kind is MissKind.PACKET_IN:
                return (VerdictKind.PACKET_IN, MISS_REASON)
            frame.hop()
            frame.bind_params(b"")
            return ("block", block_id)
        elif isinstance(ins, SearchTable):
            key, width = build_key(ins.key_fields, frame)
            entry = frame.tables.lookup(ins.table_id, key, width)
            frame.set_hit_flag(entry is not None)
            if entry is not None:
                frame.write(ins.dst, params_slice(frame, entry.params, ins.dst))
        elif isinstance(ins, Output):
            return (VerdictKind.OUTPUT, frame.operand(ins.port))
        elif isinstance(ins, Drop):
            return (VerdictKind.DROP, 0)
        elif isinstance(ins, PacketIn):
            return (VerdictKind.PACKET_IN, ins.reason)
        elif isinstance(ins, Branch):
            if compare(ins.cmp, frame.operand(ins.a), frame.operand(ins.b)):
                return ins.target.resolve(pc)
        elif isinstance(ins, Jump):
            return ins.target.resolve(pc)
        elif isinstance(ins, EntryMod):
            frame.entry_mod(ins)
        elif isinstance(ins, TableMod):
            frame.table_mod(ins)
        else:  # pragma: no cover
            raise Fault("UNKNOWN_KIND", type(ins).__name__)
        return pc + 1


def run_packet(program, packet: bytes, ingress_port: int = 0, tables=None, pool: bytearray | None = None,
               costs: InterpCosts = DEFAULT_COSTS) -> Verdict:
    """One-shot convenience: install ``program`` into fresh state (unless given) and run a packet."""
    from .runtime import fresh_state

    blocks, tables, pool = fresh_state(program, tables, pool)
    frame = Frame(packet, ingress_port, pool, tables)
    return Interpreter(blocks, costs).run(frame, program.start_block)

