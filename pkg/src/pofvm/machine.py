"""State and primitives shared by both execution engines.

Both engines drive the same buffers, tables and pool through the helpers
here, so anything observable (verdict, bytes, pool, tables) can be
compared between them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import bits
from .errors import BitError, PofError, TableError
from .isa import (
    HIT_FLAG, INGRESS_PORT, CalcOp, Cmp, EntryMod, EntryOp, FieldRef, Imm, Operand, Sizes, Space,
    TableMod, TableOp, operand_width,
)
from .perf import CostReport
from .tables import FlowEntry, TableStore

HOP_LIMIT = 64
MISS_REASON = 0  # packet-in reason for table-miss delivery
WORD_MASK = (1 << 64) - 1


class VerdictKind(enum.Enum):
    OUTPUT = "out"
    DROP = "drop"
    PACKET_IN = "packetin"


@dataclass
class Verdict:
    kind: VerdictKind
    value: int = 0  # port for OUTPUT, reason for PACKET_IN
    packet: bytes = b""
    cost: CostReport = field(default_factory=CostReport)
    error: str | None = None
    notes: tuple[str, ...] = ()

    def outcome(self) -> tuple:
        """Everything the engines must agree on (cost excluded)."""
        return (self.kind, self.value, self.packet, self.error, self.notes)

    def __str__(self) -> str:
        head = {VerdictKind.OUTPUT: f"out {self.value}", VerdictKind.DROP: "drop",
                VerdictKind.PACKET_IN: f"packetin {self.value}"}[self.kind]
        if self.error:
            head += f" ({self.error})"
        return head


class Fault(PofError):
    """Fatal datapath condition; the packet is dropped with ``code`` attached."""


def alu(op: CalcOp, a: int, b: int) -> int:
    """64-bit ALU; results are masked to 64 bits (stores truncate further)."""
    if op is CalcOp.ADD:
        r = a + b
    elif op is CalcOp.SUB:
        r = a - b
    elif op is CalcOp.AND:
        r = a & b
    elif op is CalcOp.OR:
        r = a | b
    elif op is CalcOp.XOR:
        r = a ^ b
    elif op is CalcOp.SHL:
        r = a << b if b < 64 else 0
    else:
        r = a >> b if b < 64 else 0
    return r & WORD_MASK


def compare(cmp: Cmp, a: int, b: int) -> bool:
    return {
        Cmp.EQ: a == b, Cmp.NE: a != b, Cmp.LT: a < b,
        Cmp.GT: a > b, Cmp.LE: a <= b, Cmp.GE: a >= b,
    }[cmp]


class Frame:
    """Per-packet buffers plus handles to the shared pool and tables."""

    def __init__(self, packet: bytes, ingress_port: int, pool: bytearray, tables: TableStore,
                 sizes: Sizes = Sizes()) -> None:
        if len(packet) > bits.MAX_PACKET_BYTES:
            raise BitError("OVERFLOW", f"packet of {len(packet)} bytes")
        self.packet = bytearray(packet)
        self.metadata = bytearray(sizes.metadata)
        self.params = bytes(sizes.params)
        self.pool = pool
        self.tables = tables
        self.sizes = sizes
        self.hops = 0
        self.notes: list[str] = []
        bits.set_field(self.metadata, INGRESS_PORT.offset, INGRESS_PORT.length, ingress_port & 0xFFFFFFFF)

    def buffer(self, space: Space) -> bytearray | bytes:
        if space is Space.PACKET:
            return self.packet
        if space is Space.METADATA:
            return self.metadata
        if space is Space.PARAMETER:
            return self.params
        return self.pool

    def bind_params(self, params: bytes) -> None:
        self.params = params.ljust(self.sizes.params, b"\x00")

    def read(self, f: FieldRef) -> int:
        return bits.get_field(self.buffer(f.space), f.offset, f.length)

    def write(self, f: FieldRef, value: int) -> None:
        buf = self.buffer(f.space)
        if not isinstance(buf, bytearray):
            raise BitError("READ_ONLY", f"{f} is read-only")
        bits.set_field(buf, f.offset, f.length, value & ((1 << f.length) - 1))

    def operand(self, op: Operand) -> int:
        return op.value if isinstance(op, Imm) else self.read(op)

    def concat(self, ops) -> tuple[int, int]:
        value = width = 0
        for op in ops:
            w = operand_width(op)
            value = (value << w) | self.operand(op)
            width += w
        return value, width

    def set_hit_flag(self, hit: bool) -> None:
        bits.set_field(self.metadata, HIT_FLAG.offset, 1, int(hit))

    def checksum(self, dst: FieldRef, offset: int, length: int) -> int:
        """Internet checksum over packet bits [offset, offset+length) with ``dst`` read as zero."""
        region = bytearray(self.packet[offset // 8:(offset + length) // 8])
        if len(region) * 8 != length:
            raise BitError("OUT_OF_RANGE", "checksum region exceeds packet")
        if dst.space is Space.PACKET and dst.offset < offset + length and dst.end > offset:
            lo = max(dst.offset, offset)
            hi = min(dst.end, offset + length)
            bits.set_field(region, lo - offset, hi - lo, 0)
        return bits.internet_checksum(region)

    def hop(self) -> None:
        self.hops += 1
        if self.hops > HOP_LIMIT:
            raise Fault("HOP_LIMIT", f"more than {HOP_LIMIT} table hops")

    def entry_mod(self, ins: EntryMod) -> None:
        """Apply a datapath entry mutation; table errors are noted, not fatal."""
        try:
            value, _ = self.concat(ins.key_src)
            pbits_value, pbits = self.concat(ins.params_src)
            params = pbits_value.to_bytes(pbits // 8, "big") if pbits else b""
            value &= ins.mask
            if ins.op is EntryOp.INSERT:
                self.tables.insert(ins.table_id, FlowEntry(value, ins.mask, ins.block_id, ins.priority, params))
            elif ins.op is EntryOp.DELETE:
                self.tables.delete(ins.table_id, value, ins.mask, ins.priority)
            else:
                self.tables.modify(ins.table_id, value, ins.mask, ins.priority, ins.block_id, params)
        except TableError as exc:
            self.notes.append(f"entry_mod {ins.op.value} t{ins.table_id}: {exc.code}")

    def table_mod(self, ins: TableMod) -> None:
        try:
            if ins.op is TableOp.CREATE:
                self.tables.create(ins.schema)
            else:
                self.tables.drop(ins.table_id)
        except TableError as exc:
            self.notes.append(f"table_mod {ins.op.value} t{ins.table_id}: {exc.code}")

    def verdict(self, kind: VerdictKind, value: int = 0, cost: CostReport | None = None,
                error: str | None = None) -> Verdict:
        return Verdict(kind, value, bytes(self.packet), cost or CostReport(), error, tuple(self.notes))


def miss_action(tables: TableStore, table_id: int):
    """(kind, block_id) for a miss on ``table_id``."""
    policy = tables.get(table_id).schema.miss_policy
    return policy.kind, policy.block_id

