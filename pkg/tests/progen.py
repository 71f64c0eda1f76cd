"""Random valid programs and packets for property tests.

Everything is driven by a ``random.Random`` so a failing case is
reproducible from its seed alone.
"""

from __future__ import annotations

import random

from pofvm.isa import (
    AddField, Branch, Calc, CalcOp, Checksum, Cmp, DelField, Drop, EntryMod, EntryOp, FieldRef, GotoTable, Imm,
    IncPool, InstructionBlock, Jump, Output, PacketIn, Program, ReadPool, SearchTable, SetField, Space, TableMod,
    TableOp, Target, WritePool, validate_program,
)
from pofvm.tables import FlowEntry, MatchType, MissKind, MissPolicy, TableSchema, prefix_mask

PKT_BITS = 64 * 8
POOL_BITS = 512  # keep pool traffic in a small window so packets collide


def word_field(rng: random.Random, space: Space, limit_bits: int, *, max_len: int = 64, writable=False) -> FieldRef:
    length = min(rng.choice([1, 3, 4, 8, 8, 12, 16, 16, 24, 32, 48, 64]), max_len)
    lo = 1 if (writable and space is Space.METADATA) else 0
    while True:
        off = rng.randrange(lo, limit_bits - length + 1)
        if off % 8 + length <= 64:
            return FieldRef(space, off, length)


def any_field(rng: random.Random, *, writable: bool = False, max_len: int = 64) -> FieldRef:
    spaces = [Space.PACKET, Space.METADATA] + ([] if writable else [Space.PARAMETER])
    space = rng.choice(spaces)
    limit = {Space.PACKET: PKT_BITS, Space.METADATA: 1024, Space.PARAMETER: 256}[space]
    return word_field(rng, space, limit, max_len=max_len, writable=writable)


def imm(rng: random.Random, width: int = 64) -> Imm:
    width = max(1, min(width, 64))
    value = rng.choice([0, 1, 2, (1 << width) - 1, rng.getrandbits(width)]) & ((1 << width) - 1)
    return Imm(value, width)


def operand(rng: random.Random, fit: int = 64):
    if rng.random() < 0.4:
        return imm(rng, rng.randint(1, fit))
    return any_field(rng, max_len=fit)


def _key_spec(rng: random.Random) -> tuple[FieldRef, ...]:
    n = rng.randint(1, 3)
    fields = []
    for _ in range(n):
        space = rng.choice([Space.PACKET, Space.PACKET, Space.METADATA])
        limit = PKT_BITS if space is Space.PACKET else 1024
        fields.append(word_field(rng, space, limit, max_len=rng.choice([4, 8, 16, 32])))
    return tuple(fields)


def _schema(rng: random.Random, table_id: int, width: int, block_ids: list[int]) -> TableSchema:
    kind = rng.choice(list(MissKind))
    policy = MissPolicy(kind, rng.choice(block_ids) if kind is MissKind.GOTO_BLOCK else None)
    return TableSchema(table_id, rng.choice(list(MatchType)), width, rng.choice([4, 8, 1024]), policy)


def _mask(rng: random.Random, schema: TableSchema) -> int:
    w = schema.key_width_bits
    if schema.match_type is MatchType.EXACT:
        return schema.full_mask
    if schema.match_type is MatchType.LPM:
        return prefix_mask(w, rng.randint(0, w))
    return rng.getrandbits(w)


def _params(rng: random.Random) -> bytes:
    return bytes(rng.getrandbits(8) for _ in range(rng.choice([0, 2, 4, 8, 32])))


class ProgramGen:
    def __init__(self, rng: random.Random) -> None:
        self.rng = rng

    def program(self) -> Program:
        rng = self.rng
        self.block_ids = rng.sample(range(1, 40), rng.randint(1, 5))
        n_tables = rng.randint(0, 3)
        self.keys: dict[int, tuple[FieldRef, ...]] = {}
        schemas = []
        for tid in rng.sample(range(1, 20), n_tables):
            spec = _key_spec(rng)
            self.keys[tid] = spec
            schemas.append(_schema(rng, tid, sum(f.length for f in spec), self.block_ids))
        self.schemas = {s.table_id: s for s in schemas}
        # a table only TABLE_MOD creates, so create/delete paths get exercised
        self.spare = None
        self.spare_created = False
        if rng.random() < 0.3:
            tid = max(self.keys, default=20) + 1
            spec = _key_spec(rng)
            self.spare = (tid, spec, _schema(rng, tid, sum(f.length for f in spec), self.block_ids))
            self.keys[tid] = spec
        blocks = tuple(self.block(b) for b in self.block_ids)
        entries = []
        for s in schemas:
            for _ in range(rng.randint(0, 6)):
                e = self.entry(s)
                if all(not (t == s.table_id and self._clash(x, e, s)) for t, x in entries):
                    if sum(1 for t, _ in entries if t == s.table_id) < s.max_entries:
                        entries.append((s.table_id, e))
        return Program(tuple(schemas), blocks, tuple(entries), self.block_ids[0])

    @staticmethod
    def _clash(a: FlowEntry, b: FlowEntry, s: TableSchema) -> bool:
        same = a.key_mask == b.key_mask and a.key_value == b.key_value
        return same and (s.match_type is not MatchType.MASKED or a.priority == b.priority)

    def entry(self, s: TableSchema) -> FlowEntry:
        rng = self.rng
        mask = _mask(rng, s)
        # zero keys are common in generated packets, so bias towards them
        value = rng.getrandbits(s.key_width_bits) if rng.random() < 0.5 else 0
        return FlowEntry(value & mask, mask, rng.choice(self.block_ids),
                         rng.randint(0, 3) if s.match_type is MatchType.MASKED else 0, _params(rng))

    def tables_for(self, live_only=True) -> list[int]:
        ids = list(self.schemas)
        if not live_only and self.spare_created:
            ids.append(self.spare[0])
        return ids

    def block(self, block_id: int) -> InstructionBlock:
        rng = self.rng
        n = rng.randint(0, 7)
        body = [self.instruction(k, n + 1) for k in range(n)]
        body.append(self.terminal())
        return InstructionBlock(block_id, tuple(body))

    def terminal(self):
        rng = self.rng
        choices = ["out", "drop", "packetin"] + ["goto"] * (3 if self.schemas else 0)
        kind = rng.choice(choices)
        if kind == "out":
            return Output(operand(rng, 32) if rng.random() < 0.5 else Imm(rng.randint(0, 8), 32))
        if kind == "drop":
            return Drop()
        if kind == "packetin":
            return PacketIn(rng.randint(0, 5))
        tid = rng.choice(self.tables_for())
        return GotoTable(tid, self.keys[tid])

    def instruction(self, k: int, n: int):  # noqa: C901
        rng = self.rng
        kinds = ["set", "set", "calc", "calc", "addf", "delf", "rdpool", "wrpool", "incpool", "checksum", "br",
                 "br", "jmp", "entry_mod", "table_mod"] + (["search"] * 2 if self.schemas else [])
        kind = rng.choice(kinds)
        if kind == "set":
            dst = any_field(rng, writable=True)
            src = imm(rng, dst.length) if rng.random() < 0.5 else any_field(rng, max_len=dst.length)
            if isinstance(src, FieldRef) and src.length != dst.length:
                src = imm(rng, dst.length)
            return SetField(dst, src)
        if kind == "calc":
            return Calc(rng.choice(list(CalcOp)), any_field(rng, writable=True), operand(rng), operand(rng))
        if kind == "addf":
            length = 8 * rng.randint(1, 4)
            return AddField(8 * rng.randint(0, 64), length, imm(rng, length))
        if kind == "delf":
            length = 8 * rng.randint(1, 4)
            return DelField(8 * rng.randint(0, 64 - length // 8), length)
        if kind in ("rdpool", "wrpool", "incpool"):
            length = rng.choice([8, 16, 32])
            off = rng.randrange(0, POOL_BITS - length + 1, 8)
            if kind == "rdpool":
                return ReadPool(FieldRef(Space.METADATA, 8 * rng.randint(1, 120), length), off, length)
            if kind == "wrpool":
                return WritePool(off, length, imm(rng, length))
            return IncPool(off, length, rng.randint(0, (1 << length) - 1))
        if kind == "checksum":
            start = 8 * rng.randint(0, 40)
            length = 8 * rng.randint(1, 64 - start // 8)
            dst = FieldRef(rng.choice([Space.PACKET, Space.METADATA]), 8 * rng.randint(1, 60), 16)
            return Checksum(dst, start, length)
        if kind in ("br", "jmp"):
            if k + 1 >= n - 1 and rng.random() < 0.5:
                dest = n - 1
            else:
                dest = rng.randint(k + 1, n - 1)
            target = Target(True, dest - k) if rng.random() < 0.5 else Target(False, dest)
            if kind == "jmp":
                return Jump(target)
            return Branch(operand(rng), rng.choice(list(Cmp)), operand(rng), target)
        if kind == "search":
            tid = rng.choice(self.tables_for())
            dst = FieldRef(Space.METADATA, 8 * rng.randint(1, 100), rng.choice([8, 16, 32, 64]))
            return SearchTable(tid, self.keys[tid], dst)
        if kind == "entry_mod":
            ids = self.tables_for(live_only=False)
            if not ids:
                return SetField(FieldRef(Space.METADATA, 8, 8), imm(rng, 8))
            tid = rng.choice(ids)
            schema = self.schemas.get(tid) or self.spare[2]
            spec = self.keys[tid]
            key_src = tuple(imm(rng, f.length) if rng.random() < 0.5 else f for f in spec)
            params = tuple(Imm(rng.getrandbits(8), 8) for _ in range(rng.choice([0, 1, 2, 4])))
            prio = rng.randint(0, 3) if schema.match_type is MatchType.MASKED else 0
            return EntryMod(rng.choice(list(EntryOp)), tid, key_src, _mask(rng, schema), prio,
                            rng.choice(self.block_ids), params)
        # table_mod
        if self.spare and rng.random() < 0.7:
            tid, _, schema = self.spare
            if rng.random() < 0.6:
                self.spare_created = True
                return TableMod(TableOp.CREATE, tid, schema)
            return TableMod(TableOp.DELETE, tid)
        return TableMod(TableOp.DELETE, rng.choice(list(self.schemas) or [99]))


def packet(rng: random.Random, program: Program | None = None) -> tuple[int, bytes]:
    """(ingress port, frame). Frames are 64..96 bytes; some reuse entry keys to drive hits."""
    size = rng.randint(64, 96)
    data = bytearray(rng.getrandbits(8) for _ in range(size))
    if rng.random() < 0.3:
        k = rng.randint(1, 20)
        data[:k] = bytes(k)  # zeros hit the zero-valued entries
    return rng.randint(0, 8), bytes(data)


def random_program(seed: int) -> Program:
    rng = random.Random(seed)
    prog = ProgramGen(rng).program()
    diags = validate_program(prog)
    assert not diags, f"seed {seed}: generator produced an invalid program: {diags[:3]}"
    return prog
