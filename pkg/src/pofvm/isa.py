"""Generic flow-instruction set, programs, and static validation.

Every field a program touches is named by ``(space, bit offset, bit length)``;
the switch never interprets protocol headers on its own.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Union

from .tables import MAX_KEY_BITS, MAX_PARAM_BYTES, FlowEntry, MatchType, MissKind, Table, TableSchema
from .errors import TableError

MAX_BLOCK_LEN = 256
WORD_BITS = 64


class Space(enum.Enum):
    PACKET = "pkt"
    METADATA = "meta"
    PARAMETER = "param"
    POOL = "pool"


@dataclass(frozen=True)
class Sizes:
    """Declared space sizes in bytes. ``packet`` is the minimum admitted frame."""

    packet: int = 64
    metadata: int = 128
    params: int = MAX_PARAM_BYTES
    pool: int = 64 * 1024

    def of(self, space: Space) -> int:
        return {
            Space.PACKET: self.packet,
            Space.METADATA: self.metadata,
            Space.PARAMETER: self.params,
            Space.POOL: self.pool,
        }[space]


@dataclass(frozen=True)
class FieldRef:
    space: Space
    offset: int
    length: int

    def __str__(self) -> str:
        return f"{self.space.value}[{self.offset}:{self.length}]"

    @property
    def end(self) -> int:
        return self.offset + self.length


@dataclass(frozen=True)
class Imm:
    value: int
    width: int = 64

    def __str__(self) -> str:
        return f"imm {self.value:#x}/{self.width}"


Operand = Union[FieldRef, Imm]


def operand_width(op: Operand) -> int:
    return op.length if isinstance(op, FieldRef) else op.width


# Reserved metadata: bit 0 is the last-search-hit flag; the runtime deposits
# the ingress port at bytes 12..16 on admission.
HIT_FLAG = FieldRef(Space.METADATA, 0, 1)
INGRESS_PORT = FieldRef(Space.METADATA, 96, 32)


class CalcOp(enum.Enum):
    ADD = "add"
    SUB = "sub"
    AND = "and"
    OR = "or"
    XOR = "xor"
    SHL = "shl"
    SHR = "shr"


class Cmp(enum.Enum):
    EQ = "eq"
    NE = "ne"
    LT = "lt"
    GT = "gt"
    LE = "le"
    GE = "ge"


class EntryOp(enum.Enum):
    INSERT = "insert"
    DELETE = "delete"
    MODIFY = "modify"


class TableOp(enum.Enum):
    CREATE = "create"
    DELETE = "delete"


@dataclass(frozen=True)
class Target:
    relative: bool
    value: int

    def resolve(self, index: int) -> int:
        return index + self.value if self.relative else self.value

    def __str__(self) -> str:
        return f"{self.value:+d}" if self.relative else f"@{self.value}"


@dataclass(frozen=True)
class SetField:
    dst: FieldRef
    src: Operand


@dataclass(frozen=True)
class AddField:
    offset: int
    length: int
    src: Operand


@dataclass(frozen=True)
class DelField:
    offset: int
    length: int


@dataclass(frozen=True)
class Calc:
    op: CalcOp
    dst: FieldRef
    a: Operand
    b: Operand


@dataclass(frozen=True)
class ReadPool:
    dst: FieldRef
    pool_offset: int
    length: int


@dataclass(frozen=True)
class WritePool:
    pool_offset: int
    length: int
    src: Operand


@dataclass(frozen=True)
class IncPool:
    pool_offset: int
    length: int
    delta: int


@dataclass(frozen=True)
class Checksum:
    dst: FieldRef
    region_offset: int
    region_length: int


@dataclass(frozen=True)
class GotoTable:
    table_id: int
    key_fields: tuple[FieldRef, ...]


@dataclass(frozen=True)
class SearchTable:
    table_id: int
    key_fields: tuple[FieldRef, ...]
    dst: FieldRef


@dataclass(frozen=True)
class Output:
    port: Operand


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class PacketIn:
    reason: int


@dataclass(frozen=True)
class Branch:
    a: Operand
    cmp: Cmp
    b: Operand
    target: Target


@dataclass(frozen=True)
class Jump:
    target: Target


@dataclass(frozen=True)
class EntryMod:
    op: EntryOp
    table_id: int
    key_src: tuple[Operand, ...]
    mask: int
    priority: int = 0
    block_id: int = 0
    params_src: tuple[Operand, ...] = ()


@dataclass(frozen=True)
class TableMod:
    op: TableOp
    table_id: int
    schema: TableSchema | None = None


Instruction = Union[
    SetField, AddField, DelField, Calc, ReadPool, WritePool, IncPool, Checksum,
    GotoTable, SearchTable, Output, Drop, PacketIn, Branch, Jump, EntryMod, TableMod,
]

TERMINALS = (GotoTable, Output, Drop, PacketIn)


def is_terminal(ins: Instruction) -> bool:
    return isinstance(ins, TERMINALS)


@dataclass(frozen=True)
class InstructionBlock:
    block_id: int
    instructions: tuple[Instruction, ...]


@dataclass(frozen=True)
class Program:
    schemas: tuple[TableSchema, ...] = ()
    blocks: tuple[InstructionBlock, ...] = ()
    entries: tuple[tuple[int, FlowEntry], ...] = ()
    start_block: int = 0

    def block(self, block_id: int) -> InstructionBlock:
        for b in self.blocks:
            if b.block_id == block_id:
                return b
        raise KeyError(block_id)

    def schema(self, table_id: int) -> TableSchema:
        for s in self.schemas:
            if s.table_id == table_id:
                return s
        raise KeyError(table_id)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    block_id: int | None = None
    index: int | None = None
    subject: int | None = None
    item: tuple | None = None  # ("table" | "entry", index) for program-level findings

    def __str__(self) -> str:
        where = ""
        if self.block_id is not None:
            where = f"block {self.block_id}"
            if self.index is not None:
                where += f" #{self.index}"
            where += ": "
        return f"{where}{self.code}: {self.message}"


def _span_ok(f: FieldRef) -> bool:
    return (f.offset % 8) + f.length <= WORD_BITS


class _BlockChecker:
    def __init__(self, block: InstructionBlock, sizes: Sizes, schemas: dict[int, TableSchema],
                 known_blocks: set[int] | None) -> None:
        self.block = block
        self.sizes = sizes
        self.schemas = schemas
        self.known_blocks = known_blocks
        self.diags: list[Diagnostic] = []
        self.index = 0

    def err(self, code: str, message: str, subject: int | None = None) -> None:
        self.diags.append(Diagnostic(code, message, self.block.block_id, self.index, subject))

    def field(self, f: FieldRef, *, word: bool = False, write: bool = False, allow_pool: bool = False) -> None:
        if f.space is Space.POOL and not allow_pool:
            self.err("POOL_ACCESS", f"{f}: pool is reachable only through pool instructions")
            return
        if not 1 <= f.length <= MAX_KEY_BITS or f.offset < 0:
            self.err("BAD_WIDTH", f"{f}: length must be 1..{MAX_KEY_BITS}")
            return
        if f.end > self.sizes.of(f.space) * 8:
            self.err("OUT_OF_RANGE", f"{f} exceeds {self.sizes.of(f.space)}-byte {f.space.name} space")
        if word:
            if f.length > WORD_BITS:
                self.err("BAD_WIDTH", f"{f}: arithmetic fields are at most {WORD_BITS} bits")
            elif not _span_ok(f):
                self.err("FIELD_SPAN", f"{f} straddles more than 8 bytes")
        if write:
            if f.space is Space.PARAMETER:
                self.err("READ_ONLY", f"{f}: parameter field is read-only")
            if f.space is Space.METADATA and f.offset == 0:
                self.err("RESERVED_FLAG", f"{f}: metadata bit 0 is written only by search")

    def operand(self, op: Operand, *, fit: int | None = None) -> None:
        if isinstance(op, Imm):
            if not 1 <= op.width <= WORD_BITS or op.value < 0 or op.value >> op.width:
                self.err("BAD_IMMEDIATE", f"{op} does not fit its declared width")
            elif fit is not None and op.value >> fit:
                self.err("VALUE_TOO_WIDE", f"{op} does not fit {fit} bits")
        else:
            self.field(op, word=True)

    def table(self, table_id: int, key_fields: Iterable[Operand]) -> TableSchema | None:
        schema = self.schemas.get(table_id)
        if schema is None:
            self.err("UNKNOWN_TABLE", f"table {table_id} is never declared", table_id)
            return None
        keys = list(key_fields)
        if not keys:
            self.err("EMPTY_KEY", "key needs at least one field")
            return schema
        width = sum(operand_width(k) for k in keys)
        if width != schema.key_width_bits:
            self.err("KEY_WIDTH_MISMATCH", f"key is {width} bits, table {table_id} expects {schema.key_width_bits}")
        return schema

    def block_ref(self, block_id: int) -> None:
        if self.known_blocks is not None and block_id not in self.known_blocks:
            self.err("UNKNOWN_BLOCK", f"block {block_id} is not installed", block_id)

    def target(self, t: Target, n: int) -> None:
        dest = t.resolve(self.index)
        if not 0 <= dest < n:
            self.err("TARGET_OUT_OF_BLOCK", f"target {t} resolves to {dest}, block has {n} instructions")
        elif dest <= self.index:
            self.err("BACKWARD_BRANCH", f"target {t} does not move forward")

    def check(self) -> list[Diagnostic]:
        instrs = self.block.instructions
        n = len(instrs)
        if not 1 <= n <= MAX_BLOCK_LEN:
            self.err("BLOCK_SIZE", f"{n} instructions, expected 1..{MAX_BLOCK_LEN}")
        for self.index, ins in enumerate(instrs):
            self.instruction(ins, n)
        if n and not is_terminal(instrs[-1]):
            self.index = n - 1
            self.err("MISSING_TERMINAL", "block must end with goto/out/drop/packetin")
        return self.diags

    def instruction(self, ins: Instruction, n: int) -> None:  # noqa: C901 - flat dispatch
        pkt_bits = self.sizes.packet * 8
        if isinstance(ins, SetField):
            self.field(ins.dst, word=True, write=True)
            self.operand(ins.src, fit=ins.dst.length)
            if isinstance(ins.src, FieldRef) and ins.src.length != ins.dst.length:
                self.err("WIDTH_MISMATCH", f"{ins.src} -> {ins.dst}")
        elif isinstance(ins, (AddField, DelField)):
            if ins.offset % 8 or ins.length % 8 or ins.length <= 0:
                self.err("UNALIGNED", "add/delete field works on whole bytes")
            if ins.length > WORD_BITS:
                self.err("BAD_WIDTH", f"add/delete at most {WORD_BITS} bits")
            if isinstance(ins, AddField):
                if ins.offset > pkt_bits:
                    self.err("OUT_OF_RANGE", f"insert offset {ins.offset} past packet")
                self.operand(ins.src, fit=ins.length)
                if isinstance(ins.src, FieldRef) and ins.src.length > ins.length:
                    self.err("WIDTH_MISMATCH", f"{ins.src} wider than inserted field")
            elif ins.offset + ins.length > pkt_bits:
                self.err("OUT_OF_RANGE", "deleted bytes exceed packet")
        elif isinstance(ins, Calc):
            self.field(ins.dst, word=True, write=True)
            self.operand(ins.a)
            self.operand(ins.b)
        elif isinstance(ins, ReadPool):
            if ins.dst.space is not Space.METADATA:
                self.err("BAD_SPACE", "read_pool lands in metadata")
            self.field(ins.dst, word=True, write=True)
            self.pool_range(ins.pool_offset, ins.length)
            if ins.dst.length != ins.length:
                self.err("WIDTH_MISMATCH", f"{ins.dst} vs {ins.length}-bit pool read")
        elif isinstance(ins, WritePool):
            self.pool_range(ins.pool_offset, ins.length)
            self.operand(ins.src, fit=ins.length)
            if isinstance(ins.src, FieldRef) and ins.src.length != ins.length:
                self.err("WIDTH_MISMATCH", f"{ins.src} vs {ins.length}-bit pool write")
        elif isinstance(ins, IncPool):
            self.pool_range(ins.pool_offset, ins.length)
            if ins.delta < 0 or ins.delta >> min(ins.length, WORD_BITS):
                self.err("VALUE_TOO_WIDE", f"delta {ins.delta} does not fit")
        elif isinstance(ins, Checksum):
            self.field(ins.dst, write=True)
            if ins.dst.length != 16:
                self.err("BAD_WIDTH", "checksum destination must be 16 bits")
            if ins.region_offset % 8 or ins.region_length % 8 or ins.region_length <= 0:
                self.err("UNALIGNED", "checksum region must be whole bytes")
            if ins.region_offset + ins.region_length > pkt_bits:
                self.err("OUT_OF_RANGE", "checksum region exceeds packet")
        elif isinstance(ins, (GotoTable, SearchTable)):
            for f in ins.key_fields:
                self.field(f)
            self.table(ins.table_id, ins.key_fields)
            if isinstance(ins, SearchTable):
                if ins.dst.space is not Space.METADATA:
                    self.err("BAD_SPACE", "search deposits parameters into metadata")
                self.field(ins.dst, write=True)
                if ins.dst.length > MAX_PARAM_BYTES * 8:
                    self.err("BAD_WIDTH", "search destination wider than the parameter field")
        elif isinstance(ins, Output):
            self.operand(ins.port)
            if operand_width(ins.port) > 32:
                self.err("BAD_WIDTH", "port ids are at most 32 bits")
        elif isinstance(ins, PacketIn):
            if not 0 <= ins.reason < 1 << 16:
                self.err("BAD_IMMEDIATE", "reason code is 16-bit")
        elif isinstance(ins, Branch):
            self.operand(ins.a)
            self.operand(ins.b)
            self.target(ins.target, n)
        elif isinstance(ins, Jump):
            self.target(ins.target, n)
        elif isinstance(ins, EntryMod):
            for op in ins.key_src + ins.params_src:
                self.operand(op)
            schema = self.table(ins.table_id, ins.key_src)
            if schema is not None:
                if ins.mask < 0 or ins.mask >> schema.key_width_bits:
                    self.err("BAD_MASK", "mask wider than key")
                elif schema.match_type is MatchType.EXACT and ins.mask != schema.full_mask:
                    self.err("BAD_MASK", "EXACT tables need a full mask")
                elif schema.match_type is MatchType.LPM and ins.mask != _prefix_of(ins.mask, schema.key_width_bits):
                    self.err("BAD_MASK", "LPM mask is not a prefix")
            pbits = sum(operand_width(p) for p in ins.params_src)
            if pbits % 8 or pbits > MAX_PARAM_BYTES * 8:
                self.err("BAD_PARAMS", f"params are {pbits} bits")
            if ins.op is not EntryOp.DELETE:
                self.block_ref(ins.block_id)
        elif isinstance(ins, TableMod):
            if ins.op is TableOp.CREATE:
                if ins.schema is None or ins.schema.table_id != ins.table_id:
                    self.err("BAD_SCHEMA", "create needs a schema for the same table id")
                elif ins.schema.miss_policy.kind is MissKind.GOTO_BLOCK:
                    self.block_ref(ins.schema.miss_policy.block_id)
        elif isinstance(ins, Drop):
            pass
        else:  # pragma: no cover - exhaustive
            self.err("UNKNOWN_KIND", type(ins).__name__)

    def pool_range(self, offset: int, length: int) -> None:
        if not 1 <= length <= WORD_BITS:
            self.err("BAD_WIDTH", f"pool access of {length} bits")
        elif offset < 0 or offset + length > self.sizes.pool * 8:
            self.err("OUT_OF_RANGE", f"pool bits [{offset}, {offset + length}) outside pool")
        elif (offset % 8) + length > WORD_BITS:
            self.err("FIELD_SPAN", "pool access straddles more than 8 bytes")


def _prefix_of(mask: int, width: int) -> int:
    n = bin(mask).count("1")
    return ((1 << n) - 1) << (width - n)


def declared_schemas(program: Program) -> dict[int, TableSchema]:
    """Schemas from the program plus any created by TABLE_MOD instructions."""
    out = {s.table_id: s for s in program.schemas}
    for b in program.blocks:
        for ins in b.instructions:
            if isinstance(ins, TableMod) and ins.op is TableOp.CREATE and ins.schema is not None:
                out.setdefault(ins.table_id, ins.schema)
    return out


def validate_block(block: InstructionBlock, sizes: Sizes = Sizes(),
                   schemas: dict[int, TableSchema] | Iterable[TableSchema] = (),
                   known_blocks: set[int] | None = None) -> list[Diagnostic]:
    """Static checks for one block; an empty list means the block is well formed."""
    if not isinstance(schemas, dict):
        schemas = {s.table_id: s for s in schemas}
    return _BlockChecker(block, sizes, schemas, known_blocks).check()


def validate_program(program: Program, sizes: Sizes = Sizes()) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    seen_tables: set[int] = set()
    for k, s in enumerate(program.schemas):
        if s.table_id in seen_tables:
            diags.append(Diagnostic("DUPLICATE_TABLE", f"table {s.table_id} declared twice", subject=s.table_id,
                                    item=("table", k)))
        seen_tables.add(s.table_id)
    block_ids: set[int] = set()
    for b in program.blocks:
        if b.block_id in block_ids:
            diags.append(Diagnostic("DUPLICATE_BLOCK", f"block {b.block_id} declared twice", subject=b.block_id))
        block_ids.add(b.block_id)
    if program.start_block not in block_ids:
        diags.append(Diagnostic("UNKNOWN_BLOCK", f"start block {program.start_block} missing",
                                subject=program.start_block))
    schemas = declared_schemas(program)
    for k, s in enumerate(program.schemas):
        if s.miss_policy.kind is MissKind.GOTO_BLOCK and s.miss_policy.block_id not in block_ids:
            diags.append(Diagnostic("UNKNOWN_BLOCK", f"table {s.table_id} misses to absent block "
                                    f"{s.miss_policy.block_id}", subject=s.miss_policy.block_id, item=("table", k)))
    for b in program.blocks:
        diags.extend(validate_block(b, sizes, schemas, block_ids))
    scratch = {s.table_id: Table(s) for s in program.schemas}
    for k, (table_id, entry) in enumerate(program.entries):
        where = ("entry", k)
        if entry.block_id not in block_ids:
            diags.append(Diagnostic("UNKNOWN_BLOCK", f"entry in table {table_id} cites block {entry.block_id}",
                                    subject=entry.block_id, item=where))
        table = scratch.get(table_id)
        if table is None:
            diags.append(Diagnostic("UNKNOWN_TABLE", f"entry for undeclared table {table_id}", subject=table_id,
                                    item=where))
            continue
        try:
            table.insert(entry)
        except TableError as exc:
            diags.append(Diagnostic(exc.code, f"entry in table {table_id}: {exc}", subject=table_id, item=where))
    return diags
