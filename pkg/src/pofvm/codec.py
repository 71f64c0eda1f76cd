"""Binary program images (``.pofb``).

Layout, all integers big-endian::

    "POFB" u16 version
    section*:  u16 type, u32 length, body
        SCHEMAS=1  ENTRIES=3: u32 count, then u32-length-prefixed records
        BLOCKS=2:  same; each block record holds u16-length-prefixed instructions
        START=4:   u32 block id

Sections always appear in type order and empty ones are left out, so the
same Program always encodes to the same bytes. Blocks and entries live in
separate sections so either can be shipped on its own.
"""

from __future__ import annotations

import struct

from .errors import CodecError, PofError
from .isa import (
    AddField, Branch, Calc, CalcOp, Checksum, Cmp, DelField, Drop, EntryMod, EntryOp, FieldRef, GotoTable, Imm,
    IncPool, InstructionBlock, Jump, Output, PacketIn, Program, ReadPool, SearchTable, SetField, Space, TableMod,
    TableOp, Target, WritePool,
)
from .tables import FlowEntry, MatchType, MissKind, MissPolicy, TableSchema

MAGIC = b"POFB"
VERSION = 1
SCHEMAS, BLOCKS, ENTRIES, START = 1, 2, 3, 4
SECTION_NAMES = {SCHEMAS: "SCHEMAS", BLOCKS: "BLOCKS", ENTRIES: "ENTRIES", START: "START"}

_OPCODES = [SetField, AddField, DelField, Calc, ReadPool, WritePool, IncPool, Checksum, GotoTable, SearchTable,
            Output, Drop, PacketIn, Branch, Jump, EntryMod, TableMod]
_OPCODE_OF = {cls: n + 1 for n, cls in enumerate(_OPCODES)}
_SPACES = list(Space)
_MATCHES = list(MatchType)
_MISSES = list(MissKind)
_CALCS = list(CalcOp)
_CMPS = list(Cmp)
_EOPS = list(EntryOp)
_TOPS = list(TableOp)


class _W:
    def __init__(self) -> None:
        self.buf = bytearray()

    def put(self, fmt: str, *vals) -> None:
        try:
            self.buf += struct.pack(">" + fmt, *vals)
        except struct.error as exc:
            raise CodecError("RANGE", f"{vals} does not fit {fmt}: {exc}", len(self.buf)) from None

    def big(self, v: int) -> None:
        """Unsigned integer of any size: u8 byte count then bytes."""
        if v < 0:
            raise CodecError("RANGE", f"negative value {v}", len(self.buf))
        raw = v.to_bytes((v.bit_length() + 7) // 8, "big")
        self.put("B", len(raw))
        self.buf += raw

    def blob(self, data: bytes, fmt: str = "H") -> None:
        self.put(fmt, len(data))
        self.buf += data

    def field(self, f: FieldRef) -> None:
        self.put("BHH", _SPACES.index(f.space), f.offset, f.length)

    def operand(self, op) -> None:
        if isinstance(op, Imm):
            self.put("BB", 1, op.width)
            self.big(op.value)
        else:
            self.put("B", 0)
            self.field(op)

    def many(self, ops, each) -> None:
        self.put("B", len(ops))
        for op in ops:
            each(op)

    def target(self, t: Target) -> None:
        self.put("Bh", int(t.relative), t.value)

    def schema(self, s: TableSchema) -> None:
        pol = s.miss_policy
        self.put("HBHIBI", s.table_id, _MATCHES.index(s.match_type), s.key_width_bits, s.max_entries,
                 _MISSES.index(pol.kind), pol.block_id or 0)


class _R:
    def __init__(self, data: bytes, start: int, end: int, section: str) -> None:
        self.data = data
        self.pos = start
        self.end = end
        self.section = section

    def fail(self, code: str, message: str, at: int | None = None) -> CodecError:
        at = self.pos if at is None else at
        return CodecError(code, f"{self.section} @ {at}: {message}", at, self.section)

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise self.fail("TRUNCATED", f"need {n} bytes, {self.end - self.pos} left")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def get(self, fmt: str):
        vals = struct.unpack(">" + fmt, self.take(struct.calcsize(">" + fmt)))
        return vals[0] if len(vals) == 1 else vals

    def pick(self, table: list, idx: int, what: str):
        if idx >= len(table):
            raise self.fail("BAD_VALUE", f"{what} code {idx}", self.pos - 1)
        return table[idx]

    def big(self) -> int:
        return int.from_bytes(self.take(self.get("B")), "big")

    def blob(self, fmt: str = "H") -> bytes:
        return self.take(self.get(fmt))

    def field(self) -> FieldRef:
        space, off, length = self.get("BHH")
        return FieldRef(self.pick(_SPACES, space, "space"), off, length)

    def operand(self):
        tag = self.get("B")
        if tag == 1:
            width = self.get("B")
            return Imm(self.big(), width)
        if tag != 0:
            raise self.fail("BAD_VALUE", f"operand tag {tag}", self.pos - 1)
        return self.field()

    def many(self, each) -> tuple:
        return tuple(each() for _ in range(self.get("B")))

    def target(self) -> Target:
        rel, value = self.get("Bh")
        return Target(bool(rel), value)

    def schema(self) -> TableSchema:
        tid, match, width, size, miss, block = self.get("HBHIBI")
        kind = self.pick(_MISSES, miss, "miss policy")
        policy = MissPolicy(kind, block if kind is MissKind.GOTO_BLOCK else None)
        try:
            return TableSchema(tid, self.pick(_MATCHES, match, "match type"), width, size, policy)
        except PofError as exc:
            raise self.fail("BAD_VALUE", str(exc)) from None

    def done(self) -> None:
        if self.pos != self.end:
            raise self.fail("TRAILING", f"{self.end - self.pos} unread bytes")


# ---------------------------------------------------------------------------
# instructions


def _enc_ins(w: _W, ins) -> None:  # noqa: C901 - one arm per kind
    if isinstance(ins, SetField):
        w.field(ins.dst); w.operand(ins.src)  # noqa: E702
    elif isinstance(ins, AddField):
        w.put("HH", ins.offset, ins.length); w.operand(ins.src)  # noqa: E702
    elif isinstance(ins, DelField):
        w.put("HH", ins.offset, ins.length)
    elif isinstance(ins, Calc):
        w.put("B", _CALCS.index(ins.op)); w.field(ins.dst); w.operand(ins.a); w.operand(ins.b)  # noqa: E702
    elif isinstance(ins, ReadPool):
        w.field(ins.dst); w.put("II", ins.pool_offset, ins.length)  # noqa: E702
    elif isinstance(ins, WritePool):
        w.put("II", ins.pool_offset, ins.length); w.operand(ins.src)  # noqa: E702
    elif isinstance(ins, IncPool):
        w.put("II", ins.pool_offset, ins.length); w.big(ins.delta)  # noqa: E702
    elif isinstance(ins, Checksum):
        w.field(ins.dst); w.put("HH", ins.region_offset, ins.region_length)  # noqa: E702
    elif isinstance(ins, GotoTable):
        w.put("H", ins.table_id); w.many(ins.key_fields, w.field)  # noqa: E702
    elif isinstance(ins, SearchTable):
        w.put("H", ins.table_id); w.many(ins.key_fields, w.field); w.field(ins.dst)  # noqa: E702
    elif isinstance(ins, Output):
        w.operand(ins.port)
    elif isinstance(ins, PacketIn):
        w.put("H", ins.reason)
    elif isinstance(ins, Branch):
        w.operand(ins.a); w.put("B", _CMPS.index(ins.cmp)); w.operand(ins.b); w.target(ins.target)  # noqa: E702
    elif isinstance(ins, Jump):
        w.target(ins.target)
    elif isinstance(ins, EntryMod):
        w.put("BH", _EOPS.index(ins.op), ins.table_id)
        w.many(ins.key_src, w.operand)
        w.big(ins.mask)
        w.put("HI", ins.priority, ins.block_id)
        w.many(ins.params_src, w.operand)
    elif isinstance(ins, TableMod):
        w.put("BH", _TOPS.index(ins.op), ins.table_id)
        if ins.op is TableOp.CREATE:
            w.schema(ins.schema)


def _dec_ins(r: _R, cls):  # noqa: C901
    if cls is SetField:
        return SetField(r.field(), r.operand())
    if cls is AddField:
        off, length = r.get("HH")
        return AddField(off, length, r.operand())
    if cls is DelField:
        return DelField(*r.get("HH"))
    if cls is Calc:
        op = r.pick(_CALCS, r.get("B"), "alu op")
        return Calc(op, r.field(), r.operand(), r.operand())
    if cls is ReadPool:
        dst = r.field()
        return ReadPool(dst, *r.get("II"))
    if cls is WritePool:
        off, length = r.get("II")
        return WritePool(off, length, r.operand())
    if cls is IncPool:
        off, length = r.get("II")
        return IncPool(off, length, r.big())
    if cls is Checksum:
        dst = r.field()
        return Checksum(dst, *r.get("HH"))
    if cls is GotoTable:
        return GotoTable(r.get("H"), r.many(r.field))
    if cls is SearchTable:
        tid = r.get("H")
        keys = r.many(r.field)
        return SearchTable(tid, keys, r.field())
    if cls is Output:
        return Output(r.operand())
    if cls is Drop:
        return Drop()
    if cls is PacketIn:
        return PacketIn(r.get("H"))
    if cls is Branch:
        a = r.operand()
        cmp = r.pick(_CMPS, r.get("B"), "comparison")
        return Branch(a, cmp, r.operand(), r.target())
    if cls is Jump:
        return Jump(r.target())
    if cls is EntryMod:
        op, tid = r.get("BH")
        op = r.pick(_EOPS, op, "entry op")
        keys = r.many(r.operand)
        mask = r.big()
        prio, block = r.get("HI")
        return EntryMod(op, tid, keys, mask, prio, block, r.many(r.operand))
    op, tid = r.get("BH")
    op = r.pick(_TOPS, op, "table op")
    return TableMod(op, tid, r.schema() if op is TableOp.CREATE else None)


# ---------------------------------------------------------------------------
# sections


def _records(items, each) -> bytes:
    w = _W()
    w.put("I", len(items))
    for item in items:
        rec = _W()
        each(rec, item)
        w.blob(bytes(rec.buf), "I")
    return bytes(w.buf)


def _enc_block(w: _W, b: InstructionBlock) -> None:
    w.put("IH", b.block_id, len(b.instructions))
    for ins in b.instructions:
        body = _W()
        _enc_ins(body, ins)
        w.put("B", _OPCODE_OF[type(ins)])
        w.blob(bytes(body.buf))


def _enc_entry(w: _W, item) -> None:
    table_id, e = item
    w.put("H", table_id)
    w.big(e.key_value)
    w.big(e.key_mask)
    w.put("HI", e.priority, e.block_id)
    w.blob(e.params, "B")


def encode_section(kind: int, body: bytes) -> bytes:
    return struct.pack(">HI", kind, len(body)) + body


def encode(program: Program) -> bytes:
    """Deterministic image of ``program``."""
    out = bytearray(MAGIC + struct.pack(">H", VERSION))
    if program.schemas:
        out += encode_section(SCHEMAS, _records(program.schemas, _W.schema))
    if program.blocks:
        out += encode_section(BLOCKS, _records(program.blocks, _enc_block))
    if program.entries:
        out += encode_section(ENTRIES, _records(program.entries, _enc_entry))
    out += encode_section(START, struct.pack(">I", program.start_block))
    return bytes(out)


def _each_record(r: _R, decode_one) -> tuple:
    items = []
    for _ in range(r.get("I")):
        length = r.get("I")
        start = r.pos
        if start + length > r.end:
            raise r.fail("TRUNCATED", f"record of {length} bytes overruns section", start - 4)
        sub = _R(r.data, start, start + length, r.section)
        items.append(decode_one(sub))
        sub.done()
        r.pos = start + length
    return tuple(items)


def _dec_block(r: _R) -> InstructionBlock:
    block_id, count = r.get("IH")
    instrs = []
    for _ in range(count):
        code = r.get("B")
        if not 1 <= code <= len(_OPCODES):
            raise r.fail("UNKNOWN_TLV", f"instruction opcode {code}", r.pos - 1)
        length = r.get("H")
        if r.pos + length > r.end:
            raise r.fail("TRUNCATED", f"instruction of {length} bytes overruns block", r.pos - 2)
        sub = _R(r.data, r.pos, r.pos + length, r.section)
        instrs.append(_dec_ins(sub, _OPCODES[code - 1]))
        sub.done()
        r.pos += length
    return InstructionBlock(block_id, tuple(instrs))


def _dec_entry(r: _R) -> tuple[int, FlowEntry]:
    table_id = r.get("H")
    value = r.big()
    mask = r.big()
    prio, block = r.get("HI")
    return table_id, FlowEntry(value, mask, block, prio, r.blob("B"))


def sections(data: bytes) -> list[tuple[int, int, int]]:
    """``(type, body_start, body_end)`` for each section after the header."""
    if len(data) < 6 or data[:4] != MAGIC:
        raise CodecError("BAD_MAGIC", f"image does not start with {MAGIC!r}", 0, "header")
    version = struct.unpack(">H", data[4:6])[0]
    if version != VERSION:
        raise CodecError("BAD_VERSION", f"version {version}, expected {VERSION}", 4, "header")
    out = []
    pos = 6
    while pos < len(data):
        if pos + 6 > len(data):
            raise CodecError("TRUNCATED", f"section header at {pos} cut short", pos, "header")
        kind, length = struct.unpack(">HI", data[pos:pos + 6])
        if kind not in SECTION_NAMES:
            raise CodecError("UNKNOWN_TLV", f"section type {kind} at offset {pos}", pos, "header")
        if pos + 6 + length > len(data):
            raise CodecError("TRUNCATED", f"{SECTION_NAMES[kind]} @ {pos}: declares {length} bytes, "
                             f"{len(data) - pos - 6} present", pos, SECTION_NAMES[kind])
        out.append((kind, pos + 6, pos + 6 + length))
        pos += 6 + length
    return out


def decode(data: bytes) -> Program:
    data = bytes(data)
    schemas: tuple = ()
    blocks: tuple = ()
    entries: tuple = ()
    start = None
    last = 0
    for kind, lo, hi in sections(data):
        name = SECTION_NAMES[kind]
        if kind <= last:
            raise CodecError("BAD_ORDER", f"{name} section out of order at {lo - 6}", lo - 6, name)
        last = kind
        r = _R(data, lo, hi, name)
        if kind == SCHEMAS:
            schemas = _each_record(r, _R.schema)
        elif kind == BLOCKS:
            blocks = _each_record(r, _dec_block)
        elif kind == ENTRIES:
            entries = _each_record(r, _dec_entry)
        else:
            start = r.get("I")
        r.done()
    if start is None:
        raise CodecError("TRUNCATED", "image has no START section", len(data), "START")
    return Program(schemas, blocks, entries, start)
